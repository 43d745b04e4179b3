// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/population.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace mfsoc
{

namespace
{

constexpr std::uint64_t kPopulationNoiseSalt = 0x90901a7eULL;

Mat cross_weight(const Mat& Q, const Mat& S)
{
    return Q * S + S.transpose() * Q - S.transpose() * Q * S;
}

double total_cost(const std::vector<double>& c)
{
    return pairwise_sum(c);
}

}  // namespace

RealizedPaths integrate_population(const Discretization& disc, const std::vector<int>& assignment, const Mat& xi,
                                   const PathEnsemble& control, const NoiseEnsemble* noise, int workers)
{
    const Scenario& sc = disc.sc;
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    const double h = g.h;
    const int N = static_cast<int>(assignment.size());
    const bool diff = sc.has_diffusion() && noise != nullptr;

    RealizedPaths r{PathEnsemble(g, N, sc.n, PathKind::state), PathEnsemble(g, 1, sc.n, PathKind::deterministic),
                    PathEnsemble(g, 1, sc.d, PathKind::deterministic)};
    for (int i = -g.history_len; i < 0; ++i)
    {
        r.state.set_all(i, tb.x_hist(i));
        r.xbar.vec(0, i) = tb.x_hist(i);
        r.ubar.vec(0, i) = control.mean(i);
    }
    for (int j = 0; j < N; ++j)
        r.state.vec(j, 0) = xi.row(j).transpose();

    for (int i = 0; i <= S; ++i)
    {
        r.xbar.vec(0, i) = r.state.mean(i);
        if (i == S)
            break;
        r.ubar.vec(0, i) = control.mean(i);
        const Vec common =
            tb.at(tb.Atilde, i) * r.xbar.vec(0, i - md) + tb.at(tb.Btilde, i) * r.ubar.vec(0, i - mt);
        const Mat& B = tb.at(tb.B, i);
        const Mat& Bh = tb.at(tb.Bhat, i);
        const Mat& D = tb.at(tb.D, i);
        const Mat& Dh = tb.at(tb.Dhat, i);
        parallel_for(static_cast<std::size_t>(N), workers, [&](std::size_t b, std::size_t e) {
            for (std::size_t q = b; q < e; ++q)
            {
                const int j = static_cast<int>(q);
                const int k = assignment[q];
                auto u = control.vec(j, i);
                auto ud = control.vec(j, i - mt);
                Vec drift = tb.at(tb.A[k], i) * r.state.vec(j, i) + tb.at(tb.Ahat[k], i) * r.state.vec(j, i - md)
                            + B * u + Bh * ud + common;
                r.state.vec(j, i + 1) = r.state.vec(j, i) + h * drift;
                if (diff)
                    r.state.vec(j, i + 1) += noise->at(j, i) * (D * u + Dh * ud);
            }
        });
        for (int j = 0; j < N; ++j)
            if (!r.state.vec(j, i + 1).allFinite())
                throw Error(ErrorCode::divergence, "population", "non-finite realized state", i + 1);
    }
    return r;
}

std::vector<double> agent_costs(const Discretization& disc, const std::vector<int>& assignment,
                                const PathEnsemble& state, const PathEnsemble& control, const PathEnsemble& xbar)
{
    const Scenario& sc = disc.sc;
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    std::vector<double> cost(assignment.size());
    std::vector<double> terms(static_cast<std::size_t>(S));
    for (std::size_t q = 0; q < assignment.size(); ++q)
    {
        const int j = static_cast<int>(q);
        const int k = assignment[q];
        for (int m = 0; m < S; ++m)
        {
            Vec e1 = state.vec(j, m) - tb.at(tb.S, m) * xbar.vec(0, m);
            Vec e2 = state.vec(j, m - md) - tb.at(tb.Stilde, m) * xbar.vec(0, m - md);
            auto u = control.vec(j, m);
            auto ud = control.vec(j, m - mt);
            double v = e1.dot(tb.at(tb.Q, m) * e1) + e2.dot(tb.at(tb.Qtilde, m) * e2)
                       + u.dot(tb.at(tb.R[k], m) * u) + ud.dot(tb.at(tb.Rtilde[k], m) * ud);
            terms[static_cast<std::size_t>(m)] = g.h * v;
        }
        Vec eT = state.vec(j, S) - sc.Gamma * xbar.vec(0, S);
        cost[q] = 0.5 * (pairwise_sum(terms) + eT.dot(sc.G * eT));
    }
    return cost;
}

PopulationRun simulate_realized_population(const CCSolution& cc, int N, MixPolicy policy, std::uint64_t seed,
                                           int workers)
{
    const Discretization& disc = cc.disc;
    const Scenario& sc = disc.sc;
    PopulationRun run;
    run.N = N;
    run.seed = seed;
    run.mix = empirical_mix(N, sc.pi, policy, seed);
    run.xi.resize(N, sc.n);
    for (int j = 0; j < N; ++j)
        run.xi.row(j) = sample_agent_state(sc, run.mix.assignment[static_cast<std::size_t>(j)], seed, j).transpose();
    run.noise = make_noise(disc.grid, N, path_seed(seed, 0, kPopulationNoiseSalt), false, workers);
    FieldPaths aux =
        simulate_field_paths(disc, run.mix.assignment, run.xi, cc.field, cc.xhat, cc.uhat, run.noise, workers);
    run.aux_state = std::move(aux.state);
    run.control = std::move(aux.control);
    RealizedPaths rp = integrate_population(disc, run.mix.assignment, run.xi, run.control, &run.noise, workers);
    run.state = std::move(rp.state);
    run.xbar = std::move(rp.xbar);
    run.ubar = std::move(rp.ubar);
    run.cost = agent_costs(disc, run.mix.assignment, run.state, run.control, run.xbar);
    run.social = total_cost(run.cost);
    return run;
}

double social_cost(const PopulationRun& run)
{
    return total_cost(run.cost);
}

ConsistencyMetrics consistency_error(const PopulationRun& run, const CCSolution& cc)
{
    const TimeGrid& g = cc.disc.grid;
    ConsistencyMetrics m;
    for (int i = 0; i <= g.steps; ++i)
        m.state = std::max(m.state, (run.xbar.vec(0, i) - cc.xhat.vec(0, i)).squaredNorm());
    for (int i = 0; i < g.steps; ++i)
        m.control = std::max(m.control, (run.ubar.vec(0, i) - cc.uhat.vec(0, i)).squaredNorm());
    return m;
}

PathEnsemble perturbation_path(const Discretization& disc, const PopulationRun& run, int agent,
                               const Perturbation& du)
{
    const TimeGrid& g = disc.grid;
    const int S = g.steps;
    const int d = disc.sc.d;
    if (agent < 0 || agent >= run.N)
        throw Error(ErrorCode::usage, "population", "agent index out of range", agent);
    if (static_cast<int>(du.values.size()) != S)
        throw Error(ErrorCode::structure, "population", "perturbation needs one value per step");
    if (du.noise_owner >= 0 && du.noise_owner != agent)
        throw Error(ErrorCode::admissibility, "population",
                    "perturbation of agent " + std::to_string(agent) + " reads the noise of agent "
                        + std::to_string(du.noise_owner),
                    du.noise_owner);
    if (du.noise_owner >= 0 && static_cast<int>(du.gain.size()) != S)
        throw Error(ErrorCode::structure, "population", "noise gain needs one value per step");
    PathEnsemble p(g, 1, d, PathKind::control);
    double W = 0;
    for (int i = 0; i < S; ++i)
    {
        Vec v = du.values[static_cast<std::size_t>(i)];
        if (du.noise_owner >= 0)
        {
            v += W * du.gain[static_cast<std::size_t>(i)];
            W += run.noise.at(agent, i);
        }
        p.vec(0, i) = v;
    }
    return p;
}

double perturbed_social_cost(const CCSolution& cc, const PopulationRun& run, int agent, const PathEnsemble& du,
                             double s)
{
    PathEnsemble u = run.control;
    for (int i = 0; i < cc.disc.grid.steps; ++i)
        u.vec(agent, i) += s * du.vec(0, i);
    RealizedPaths rp = integrate_population(cc.disc, run.mix.assignment, run.xi, u, &run.noise);
    return total_cost(agent_costs(cc.disc, run.mix.assignment, rp.state, u, rp.xbar));
}

EpsilonReport epsilon_terms(const CCSolution& cc, const PopulationRun& run, int agent, const Perturbation& pert)
{
    const Discretization& disc = cc.disc;
    const Scenario& sc = disc.sc;
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    const int K = sc.K;
    const int n = sc.n;
    const double h = g.h;
    const double N = run.N;

    PathEnsemble du = perturbation_path(disc, run, agent, pert);
    const int ki = run.mix.assignment[static_cast<std::size_t>(agent)];
    const double* dW = sc.has_diffusion() ? run.noise.dW.data() + static_cast<std::size_t>(agent) * S : nullptr;
    VariationBundle vb = simulate_variation(disc, du, ki, run.mix, dW);

    // Averages (1/N_k) Sum_{j != i, type k} x~_j and the matching adjoints.
    std::vector<double> Nk(static_cast<std::size_t>(K));
    std::vector<PathEnsemble> xavg, yavg;
    for (int k = 0; k < K; ++k)
    {
        Nk[static_cast<std::size_t>(k)] = run.mix.counts[static_cast<std::size_t>(k)];
        xavg.emplace_back(g, 1, n, PathKind::deterministic);
    }
    for (int j = 0; j < run.N; ++j)
    {
        if (j == agent)
            continue;
        const int k = run.mix.assignment[static_cast<std::size_t>(j)];
        const double w = 1.0 / Nk[static_cast<std::size_t>(k)];
        for (int i = -g.history_len; i <= S; ++i)
            xavg[static_cast<std::size_t>(k)].vec(0, i) += w * run.state.vec(j, i);
    }
    for (int k = 0; k < K; ++k)
    {
        const auto& xa = xavg[static_cast<std::size_t>(k)];
        PathEnsemble drv(g, 1, n, PathKind::deterministic);
        for (int m = 0; m < S; ++m)
            drv.vec(0, m) = disc.dc.QQ[static_cast<std::size_t>(m)] * xa.vec(0, m);
        drv.vec(0, S) = sc.G * xa.vec(0, S);
        yavg.push_back(solve_linear_adjoint(disc, k, xa, drv, nullptr, false).y);
    }

    // Mean-field lead forcing c(m) = Sum_k pi_k C(m + lag)' F_k(m + lag + 1).
    auto lead = [&](const std::vector<Mat>& C, int m, int lag, auto&& F, int dim) {
        Vec out = Vec::Zero(dim);
        const int j = m + lag;
        if (j + 1 > S)
            return out;
        for (int k = 0; k < K; ++k)
            out += sc.pi[static_cast<std::size_t>(k)] * tb.at(C, j).transpose() * F(k, j + 1);
        return out;
    };
    auto Yz = [&](int k, int i) -> Vec {
        return cc.yhat[static_cast<std::size_t>(k)].vec(0, i) + cc.zeta[static_cast<std::size_t>(k)].vec(0, i);
    };
    auto Ydiff = [&](int k, int i) -> Vec {
        if (Nk[static_cast<std::size_t>(k)] == 0)
            return Vec::Zero(n);
        return yavg[static_cast<std::size_t>(k)].vec(0, i) - cc.yhat[static_cast<std::size_t>(k)].vec(0, i);
    };

    EpsilonReport rep;
    auto& e = rep.eps;
    double bracket = 0;
    for (int m = 0; m < S; ++m)
    {
        const Mat& Q = tb.at(tb.Q, m);
        const Mat& Qt = tb.at(tb.Qtilde, m);
        const Mat S0 = cross_weight(Q, tb.at(tb.S, m));
        const Mat St0 = cross_weight(Qt, tb.at(tb.Stilde, m));
        const Vec xh = cc.xhat.vec(0, m);
        const Vec xh_d = cc.xhat.vec(0, m - md);
        const Vec dxi = vb.dx_i.vec(0, m);
        const Vec dxi_d = vb.dx_i.vec(0, m - md);
        const Vec u = run.control.vec(agent, m);
        const Vec u_d = run.control.vec(agent, m - mt);
        const Vec dv = du.vec(0, m);
        const Vec dv_d = du.vec(0, m - mt);

        double b = (Q * run.state.vec(agent, m) - S0 * xh).dot(dxi);
        b += (Qt * run.state.vec(agent, m - md) - St0 * xh_d).dot(dxi_d);
        b += lead(tb.Atilde, m, md, Yz, n).dot(dxi);
        b += lead(tb.Btilde, m, mt, Yz, sc.d).dot(dv);
        b += (tb.at(tb.R[ki], m) * u).dot(dv) + (tb.at(tb.Rtilde[ki], m) * u_d).dot(dv_d);
        bracket += h * b;

        e[1] += h * (S0 * (xh - run.xbar.vec(0, m))).dot(N * vb.dx_bar.vec(0, m));
        e[2] += h * (St0 * (xh_d - run.xbar.vec(0, m - md))).dot(N * vb.dx_bar.vec(0, m - md));
        Vec lim_sum = Vec::Zero(n);
        for (int k = 0; k < K; ++k)
        {
            const auto uk = static_cast<std::size_t>(k);
            lim_sum += vb.x_lim[uk].vec(0, m);
            e[4] += h * (S0 * xh).dot(vb.x_lim[uk].vec(0, m) - vb.dx_k[uk].vec(0, m));
            e[6] += h * (St0 * xh_d).dot(vb.x_lim[uk].vec(0, m - md) - vb.dx_k[uk].vec(0, m - md));
            if (Nk[uk] == 0)
                continue;
            Vec w = Nk[uk] * vb.dx_j[uk].vec(0, m) - vb.x_lim[uk].vec(0, m);
            Vec w_d = Nk[uk] * vb.dx_j[uk].vec(0, m - md) - vb.x_lim[uk].vec(0, m - md);
            e[5] += h * (Q * xavg[uk].vec(0, m)).dot(w);
            e[7] += h * (Qt * xavg[uk].vec(0, m - md)).dot(w_d);
        }
        Vec c10 = lead(tb.Atilde, m, md, Ydiff, n);
        e[10] += h * c10.dot(dxi);
        e[11] += h * c10.dot(lim_sum);
        e[12] += h * lead(tb.Btilde, m, mt, Ydiff, sc.d).dot(dv);
    }
    {
        const Vec xh = cc.xhat.vec(0, S);
        bracket += (sc.G * run.state.vec(agent, S) - disc.dc.GG * xh).dot(vb.dx_i.vec(0, S));
        e[3] = (disc.dc.GG * (xh - run.xbar.vec(0, S))).dot(N * vb.dx_bar.vec(0, S));
        for (int k = 0; k < K; ++k)
        {
            const auto uk = static_cast<std::size_t>(k);
            e[8] += (disc.dc.GG * xh).dot(vb.x_lim[uk].vec(0, S) - vb.dx_k[uk].vec(0, S));
            if (Nk[uk] == 0)
                continue;
            e[9] += (sc.G * xavg[uk].vec(0, S)).dot(Nk[uk] * vb.dx_j[uk].vec(0, S) - vb.x_lim[uk].vec(0, S));
        }
    }
    rep.bracket = bracket;
    rep.total = bracket;
    for (int l = 1; l <= 12; ++l)
        rep.total += e[static_cast<std::size_t>(l)];

    for (int m = 0; m <= S; ++m)
    {
        double s6 = 0, s7 = 0, s9 = 0;
        for (int k = 0; k < K; ++k)
        {
            const auto uk = static_cast<std::size_t>(k);
            s6 += (vb.x_lim[uk].vec(0, m) - vb.dx_k[uk].vec(0, m)).squaredNorm();
            if (Nk[uk] == 0)
                continue;
            s7 += (Nk[uk] * vb.dx_j[uk].vec(0, m) - vb.x_lim[uk].vec(0, m)).squaredNorm();
            s9 += Ydiff(k, m).squaredNorm();
        }
        rep.est6 = std::max(rep.est6, s6);
        rep.est7 = std::max(rep.est7, s7);
        rep.est9 = std::max(rep.est9, s9);
    }
    rep.consistency = consistency_error(run, cc);
    return rep;
}

DerivativeReport directional_derivative(const CCSolution& cc, const PopulationRun& run, int agent,
                                        const Perturbation& du, double s)
{
    DerivativeReport r;
    r.eps = epsilon_terms(cc, run, agent, du);
    r.derivative = r.eps.total;
    r.step = s;
    PathEnsemble p = perturbation_path(cc.disc, run, agent, du);
    double up = perturbed_social_cost(cc, run, agent, p, s);
    double down = perturbed_social_cost(cc, run, agent, p, -s);
    r.fd = (up - down) / (2.0 * s);
    return r;
}

RateFit rate_fit(const std::vector<double>& N, const std::vector<double>& metric)
{
    if (N.size() != metric.size() || N.size() < 2)
        throw Error(ErrorCode::usage, "population", "rate fit needs matching series of at least two points");
    for (std::size_t j = 0; j < N.size(); ++j)
        if (!(N[j] > 0) || !(metric[j] > 0))
            throw Error(ErrorCode::validation, "population", "rate fit needs positive N and metric values",
                        static_cast<long>(j));
    auto fit = [&](std::size_t skip, double& slope, double& icpt) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0, c = 0;
        for (std::size_t j = 0; j < N.size(); ++j)
        {
            if (j == skip)
                continue;
            double x = std::log(N[j]);
            double y = std::log(metric[j]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            c += 1;
        }
        double den = c * sxx - sx * sx;
        slope = den != 0 ? (c * sxy - sx * sy) / den : 0.0;
        icpt = (sy - slope * sx) / c;
    };
    RateFit r;
    fit(N.size(), r.slope, r.intercept);
    if (N.size() >= 3)
    {
        double mean = 0;
        for (std::size_t j = 0; j < N.size(); ++j)
        {
            double s = 0, c = 0;
            fit(j, s, c);
            r.jackknife.push_back(s);
            mean += s;
        }
        mean /= static_cast<double>(N.size());
        double ss = 0;
        for (double s : r.jackknife)
            ss += (s - mean) * (s - mean);
        double nn = static_cast<double>(N.size());
        r.band = std::sqrt((nn - 1.0) / nn * ss);
    }
    return r;
}

void write_population_csv(const PopulationRun& run, const ConsistencyMetrics& cm, const std::string& hash,
                          std::ostream& os)
{
    os.precision(17);
    os << "# scenario_hash=" << hash << '\n';
    os << "N,seed,metric,value\n";
    os << run.N << ',' << run.seed << ",social_cost," << run.social << '\n';
    os << run.N << ',' << run.seed << ",social_cost_per_agent," << run.social / run.N << '\n';
    os << run.N << ',' << run.seed << ",eps_N," << run.mix.eps_N << '\n';
    os << run.N << ',' << run.seed << ",consistency_state," << cm.state << '\n';
    os << run.N << ',' << run.seed << ",consistency_control," << cm.control << '\n';
    double mn = run.cost.empty() ? 0 : *std::min_element(run.cost.begin(), run.cost.end());
    double mx = run.cost.empty() ? 0 : *std::max_element(run.cost.begin(), run.cost.end());
    os << run.N << ',' << run.seed << ",agent_cost_min," << mn << '\n';
    os << run.N << ',' << run.seed << ",agent_cost_max," << mx << '\n';
}

}  // namespace mfsoc
