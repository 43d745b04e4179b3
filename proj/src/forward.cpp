// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/forward.hpp"

#include <cmath>
#include <random>

namespace mfsoc
{

namespace
{

constexpr std::uint64_t kInitialSalt = 0x5eed0000ULL;
constexpr std::uint64_t kAgentSalt = 0xa6e47000ULL;

Mat covariance_root(const InitialLaw& law)
{
    const auto n = law.mean.size();
    if (law.sampler == Sampler::point_mass || law.cov.size() == 0)
        return Mat::Zero(n, n);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (law.cov + law.cov.transpose()));
    Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal();
}

Vec standard_normal(std::uint64_t seed, Eigen::Index n)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    Vec z(n);
    for (Eigen::Index c = 0; c < n; ++c)
        z(c) = nd(gen);
    return z;
}

void check_finite(const PathEnsemble& x, int i, const char* module)
{
    for (int p = 0; p < x.paths(); ++p)
        if (!x.vec(p, i).allFinite())
            throw Error(ErrorCode::divergence, module, "non-finite state", i);
}

}  // namespace

Mat sample_initial_states(const Scenario& sc, int type, int M, std::uint64_t seed, bool antithetic)
{
    const InitialLaw& law = sc.xi[static_cast<std::size_t>(type)];
    const Eigen::Index n = law.mean.size();
    Mat out(M, n);
    Mat L = covariance_root(law);
    const bool random = law.sampler == Sampler::gaussian && L.cwiseAbs().maxCoeff() > 0;
    const std::uint64_t salt = kInitialSalt + static_cast<std::uint64_t>(type);
    for (int p = 0; p < M; ++p)
    {
        if (!random)
        {
            out.row(p) = law.mean.transpose();
            continue;
        }
        if (antithetic && p % 2 == 1)
        {
            Vec z = standard_normal(path_seed(seed, static_cast<std::uint64_t>(p - 1), salt), n);
            out.row(p) = (law.mean - L * z).transpose();
        }
        else
        {
            Vec z = standard_normal(path_seed(seed, static_cast<std::uint64_t>(p), salt), n);
            out.row(p) = (law.mean + L * z).transpose();
        }
    }
    return out;
}

Vec sample_agent_state(const Scenario& sc, int type, std::uint64_t seed, int agent)
{
    const InitialLaw& law = sc.xi[static_cast<std::size_t>(type)];
    if (law.sampler == Sampler::point_mass)
        return law.mean;
    Vec z = standard_normal(path_seed(seed, static_cast<std::uint64_t>(agent), kAgentSalt), law.mean.size());
    return law.mean + covariance_root(law) * z;
}

PathEnsemble control_with_history(const Discretization& disc, int M)
{
    PathEnsemble u(disc.grid, M, disc.sc.d, PathKind::control);
    for (int i = -disc.grid.history_len; i < 0; ++i)
        u.set_all(i, disc.tb.u_hist(i));
    return u;
}

ForwardResult m1_forward(const Discretization& disc, const std::vector<Mat>& xi, const std::vector<PathEnsemble>& v,
                         const PathEnsemble& uhat, const std::vector<NoiseEnsemble>& noise, int workers,
                         const PathEnsemble* frozen_xhat)
{
    const Scenario& sc = disc.sc;
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    const double h = g.h;
    const bool diff = sc.has_diffusion();

    ForwardResult r;
    r.xhat = PathEnsemble(g, 1, sc.n, PathKind::deterministic);
    for (int i = -g.history_len; i < 0; ++i)
        r.xhat.vec(0, i) = tb.x_hist(i);
    for (int k = 0; k < sc.K; ++k)
    {
        const Mat& x0 = xi[static_cast<std::size_t>(k)];
        PathEnsemble a(g, static_cast<int>(x0.rows()), sc.n, PathKind::state);
        for (int i = -g.history_len; i < 0; ++i)
            a.set_all(i, tb.x_hist(i));
        for (int p = 0; p < a.paths(); ++p)
            a.vec(p, 0) = x0.row(p).transpose();
        r.alpha.push_back(std::move(a));
    }

    for (int i = 0; i <= S; ++i)
    {
        if (frozen_xhat)
            r.xhat.vec(0, i) = frozen_xhat->vec(0, i);
        else
        {
            Vec m = Vec::Zero(sc.n);
            for (int k = 0; k < sc.K; ++k)
                m += sc.pi[static_cast<std::size_t>(k)] * r.alpha[static_cast<std::size_t>(k)].mean(i);
            r.xhat.vec(0, i) = m;
        }
        if (i == S)
            break;
        const Mat& B = tb.at(tb.B, i);
        const Mat& Bh = tb.at(tb.Bhat, i);
        const Mat& D = tb.at(tb.D, i);
        const Mat& Dh = tb.at(tb.Dhat, i);
        const Vec common = tb.at(tb.Atilde, i) * r.xhat.vec(0, i - md) + tb.at(tb.Btilde, i) * uhat.vec(0, i - mt);
        for (int k = 0; k < sc.K; ++k)
        {
            auto& a = r.alpha[static_cast<std::size_t>(k)];
            const auto& vk = v[static_cast<std::size_t>(k)];
            const Mat& A = tb.at(tb.A[k], i);
            const Mat& Ah = tb.at(tb.Ahat[k], i);
            parallel_for(static_cast<std::size_t>(a.paths()), workers, [&](std::size_t b, std::size_t e) {
                Vec drift(sc.n);
                for (std::size_t q = b; q < e; ++q)
                {
                    const int p = static_cast<int>(q);
                    drift.noalias() = A * a.vec(p, i);
                    drift.noalias() += Ah * a.vec(p, i - md);
                    drift.noalias() += B * vk.vec(p, i);
                    drift.noalias() += Bh * vk.vec(p, i - mt);
                    drift += common;
                    a.vec(p, i + 1) = a.vec(p, i) + h * drift;
                    if (diff)
                    {
                        const double dw = noise[static_cast<std::size_t>(k)].at(p, i);
                        a.vec(p, i + 1).noalias() += dw * (D * vk.vec(p, i));
                        a.vec(p, i + 1).noalias() += dw * (Dh * vk.vec(p, i - mt));
                    }
                }
            });
            check_finite(a, i + 1, "forward");
        }
    }
    return r;
}

Vec field_features(const ControlField& field, const PathEnsemble& state, const Vec& xi, int p, int i, int m_delta)
{
    if (field.xi_features)
        return xi;
    const int n = state.dim();
    Vec f(m_delta > 0 ? 2 * n : n);
    f.head(n) = state.vec(p, i);
    if (m_delta > 0)
        f.tail(n) = state.vec(p, i - m_delta);
    return f;
}

FieldPaths simulate_field_paths(const Discretization& disc, const std::vector<int>& path_type, const Mat& xi,
                                const std::vector<ControlField>& field, const PathEnsemble& xhat,
                                const PathEnsemble& uhat, const NoiseEnsemble& noise, int workers)
{
    const Scenario& sc = disc.sc;
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    const double h = g.h;
    const int M = static_cast<int>(xi.rows());
    const bool diff = sc.has_diffusion();

    FieldPaths out{PathEnsemble(g, M, sc.n, PathKind::state), control_with_history(disc, M)};
    for (int i = -g.history_len; i < 0; ++i)
        out.state.set_all(i, tb.x_hist(i));

    std::vector<Vec> common(static_cast<std::size_t>(S));
    for (int i = 0; i < S; ++i)
        common[static_cast<std::size_t>(i)] =
            tb.at(tb.Atilde, i) * xhat.vec(0, i - md) + tb.at(tb.Btilde, i) * uhat.vec(0, i - mt);

    parallel_for(static_cast<std::size_t>(M), workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t q = b; q < e; ++q)
        {
            const int p = static_cast<int>(q);
            const int k = path_type[q];
            const ControlField& f = field[static_cast<std::size_t>(k)];
            Vec x0 = xi.row(p).transpose();
            out.state.vec(p, 0) = x0;
            for (int i = 0; i < S; ++i)
            {
                out.control.vec(p, i) = f.eval(i, field_features(f, out.state, x0, p, i, md));
                auto u = out.control.vec(p, i);
                auto ud = out.control.vec(p, i - mt);
                Vec drift = tb.at(tb.A[k], i) * out.state.vec(p, i) + tb.at(tb.Ahat[k], i) * out.state.vec(p, i - md)
                            + tb.at(tb.B, i) * u + tb.at(tb.Bhat, i) * ud + common[static_cast<std::size_t>(i)];
                out.state.vec(p, i + 1) = out.state.vec(p, i) + h * drift;
                if (diff)
                    out.state.vec(p, i + 1) += noise.at(p, i) * (tb.at(tb.D, i) * u + tb.at(tb.Dhat, i) * ud);
                if (!out.state.vec(p, i + 1).allFinite())
                    throw Error(ErrorCode::divergence, "forward", "non-finite state", i + 1);
            }
        }
    });
    return out;
}

VariationBundle simulate_variation(const Discretization& disc, const PathEnsemble& du, int agent_type,
                                   const MixReport& mix, const double* dW)
{
    const Scenario& sc = disc.sc;
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    const int K = sc.K;
    const double h = g.h;
    const double N = static_cast<double>(mix.assignment.size());

    auto one = [&] { return PathEnsemble(g, 1, sc.n, PathKind::deterministic); };
    VariationBundle vb;
    vb.du = du;
    vb.dx_i = one();
    vb.dx_bar = one();
    for (int k = 0; k < K; ++k)
    {
        vb.dx_j.push_back(one());
        vb.dx_k.push_back(one());
        vb.x_lim.push_back(one());
    }
    std::vector<double> others(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        others[static_cast<std::size_t>(k)] = mix.counts[static_cast<std::size_t>(k)] - (k == agent_type ? 1 : 0);

    for (int i = 0; i <= S; ++i)
    {
        Vec bar = vb.dx_i.vec(0, i);
        for (int k = 0; k < K; ++k)
        {
            vb.dx_k[static_cast<std::size_t>(k)].vec(0, i) =
                others[static_cast<std::size_t>(k)] * vb.dx_j[static_cast<std::size_t>(k)].vec(0, i);
            bar += vb.dx_k[static_cast<std::size_t>(k)].vec(0, i);
        }
        vb.dx_bar.vec(0, i) = bar / N;
        if (i == S)
            break;

        const Mat& At = tb.at(tb.Atilde, i);
        const Mat& Bt = tb.at(tb.Btilde, i);
        const Vec u = du.vec(0, i);
        const Vec ud = du.vec(0, i - mt);
        const Vec bar_lag = vb.dx_bar.vec(0, i - md);
        Vec lim_lag = vb.dx_i.vec(0, i - md);
        for (int k = 0; k < K; ++k)
            lim_lag += vb.x_lim[static_cast<std::size_t>(k)].vec(0, i - md);

        {
            const int k = agent_type;
            Vec drift = tb.at(tb.A[k], i) * vb.dx_i.vec(0, i) + tb.at(tb.Ahat[k], i) * vb.dx_i.vec(0, i - md)
                        + At * bar_lag + tb.at(tb.B, i) * u + tb.at(tb.Bhat, i) * ud + Bt * ud / N;
            Vec next = vb.dx_i.vec(0, i) + h * drift;
            if (dW)
                next += dW[i] * (tb.at(tb.D, i) * u + tb.at(tb.Dhat, i) * ud);
            // dx_i is written after the other systems read index i.
            for (int l = 0; l < K; ++l)
            {
                auto& xj = vb.dx_j[static_cast<std::size_t>(l)];
                Vec dj = tb.at(tb.A[l], i) * xj.vec(0, i) + tb.at(tb.Ahat[l], i) * xj.vec(0, i - md) + At * bar_lag
                         + Bt * ud / N;
                xj.vec(0, i + 1) = xj.vec(0, i) + h * dj;
                auto& xl = vb.x_lim[static_cast<std::size_t>(l)];
                const double pl = sc.pi[static_cast<std::size_t>(l)];
                Vec dl = tb.at(tb.A[l], i) * xl.vec(0, i) + tb.at(tb.Ahat[l], i) * xl.vec(0, i - md)
                         + pl * (At * lim_lag) + pl * (Bt * ud);
                xl.vec(0, i + 1) = xl.vec(0, i) + h * dl;
            }
            vb.dx_i.vec(0, i + 1) = next;
            if (!next.allFinite())
                throw Error(ErrorCode::divergence, "forward", "non-finite variation", i + 1);
        }
    }
    return vb;
}

}  // namespace mfsoc
