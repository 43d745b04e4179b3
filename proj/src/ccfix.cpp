// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/ccfix.hpp"

#include <json.hpp>

#include <cmath>
#include <ostream>

namespace mfsoc
{

namespace
{

constexpr std::uint64_t kNoiseSalt = 0x401500ULL;
constexpr std::uint64_t kXiSalt = 0x5e1d00ULL;

// Sum over paths and steps 0..S-1 of e^{-rho t} h |a - b|^2, averaged over paths.
double sq_diff_norm(const PathEnsemble& a, const PathEnsemble* b, double rho)
{
    const TimeGrid& g = a.grid();
    std::vector<double> per(static_cast<std::size_t>(a.paths()));
    std::vector<double> terms(static_cast<std::size_t>(g.steps));
    for (int p = 0; p < a.paths(); ++p)
    {
        for (int i = 0; i < g.steps; ++i)
        {
            double s = b ? (a.vec(p, i) - b->vec(p, i)).squaredNorm() : a.vec(p, i).squaredNorm();
            terms[static_cast<std::size_t>(i)] = std::exp(-rho * g.t(i)) * g.h * s;
        }
        per[static_cast<std::size_t>(p)] = pairwise_sum(terms);
    }
    return pairwise_sum(per) / a.paths();
}

struct Adjoints
{
    std::vector<PathEnsemble> beta, ycheck, zeta, gamma, zcheck;
};

Adjoints adjoints_of(const BackwardSolution& bs)
{
    return {bs.beta, bs.ycheck, bs.zeta, bs.gamma, bs.zcheck};
}

// Squared Y and Z distances summed over types; old == nullptr compares to zero.
std::pair<double, double> distance(const BackwardSolution& bs, const Adjoints* old, double rho)
{
    double y = 0;
    double z = 0;
    for (std::size_t k = 0; k < bs.beta.size(); ++k)
    {
        y += sq_diff_norm(bs.beta[k], old ? &old->beta[k] : nullptr, rho);
        y += sq_diff_norm(bs.ycheck[k], old ? &old->ycheck[k] : nullptr, rho);
        y += sq_diff_norm(bs.zeta[k], old ? &old->zeta[k] : nullptr, rho);
        z += sq_diff_norm(bs.gamma[k], old ? &old->gamma[k] : nullptr, rho);
        z += sq_diff_norm(bs.zcheck[k], old ? &old->zcheck[k] : nullptr, rho);
    }
    return {y, z};
}

void blend(PathEnsemble& old, const PathEnsemble& fresh, double lambda)
{
    auto& o = old.raw();
    const auto& f = fresh.raw();
    for (std::size_t j = 0; j < o.size(); ++j)
        o[j] = (1.0 - lambda) * o[j] + lambda * f[j];
}

PathEnsemble mean_control(const Discretization& disc, const std::vector<PathEnsemble>& v)
{
    PathEnsemble u = control_with_history(disc, 1);
    for (int i = 0; i < disc.grid.steps; ++i)
    {
        Vec m = Vec::Zero(disc.sc.d);
        for (int k = 0; k < disc.sc.K; ++k)
            m += disc.sc.pi[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)].mean(i);
        u.vec(0, i) = m;
    }
    return u;
}

void check_options(const PicardOptions& o)
{
    if (!(o.tol > 0) && !(o.rel_tol > 0))
        throw Error(ErrorCode::usage, "ccfix", "tolerance must be positive");
    if (!(o.damping > 0 && o.damping <= 1))
        throw Error(ErrorCode::usage, "ccfix", "damping must lie in (0, 1]");
    if (o.M < 1 || o.max_iters < 1)
        throw Error(ErrorCode::usage, "ccfix", "path count and iteration limit must be positive");
}

void store(CCSolution& cc, const ForwardResult& fwd, BackwardSolution&& bs)
{
    cc.alpha = fwd.alpha;
    cc.xhat = fwd.xhat;
    cc.beta = std::move(bs.beta);
    cc.ycheck = std::move(bs.ycheck);
    cc.gamma = std::move(bs.gamma);
    cc.zcheck = std::move(bs.zcheck);
    cc.v = std::move(bs.v);
    cc.yhat = std::move(bs.yhat);
    cc.zeta = std::move(bs.zeta);
    cc.field = std::move(bs.field);
    cc.diag = std::move(bs.diag);
    cc.uhat = mean_control(cc.disc, cc.v);
}

}  // namespace

DivergenceError::DivergenceError(std::string what, std::vector<double> history, long index)
    : Error(ErrorCode::divergence, "ccfix", std::move(what), index), history_(std::move(history))
{
}

CCSolution picard_solve(const Discretization& disc, const PicardOptions& opts)
{
    check_options(opts);
    const Scenario& sc = disc.sc;
    CCSolution cc;
    cc.disc = disc;
    cc.opts = opts;
    for (int k = 0; k < sc.K; ++k)
    {
        const auto uk = static_cast<std::uint64_t>(k);
        cc.noise.push_back(make_noise(disc.grid, opts.M, path_seed(opts.seed, uk, kNoiseSalt), opts.antithetic,
                                      opts.workers));
        cc.xi.push_back(sample_initial_states(sc, k, opts.M, path_seed(opts.seed, uk, kXiSalt), opts.antithetic));
    }

    std::vector<PathEnsemble> v;
    for (int k = 0; k < sc.K; ++k)
        v.push_back(control_with_history(disc, opts.M));
    PathEnsemble uhat = mean_control(disc, v);

    BackwardOptions bo;
    bo.ce = opts.ce;
    bo.workers = opts.workers;

    Adjoints old;
    bool have_old = false;
    try
    {
        ForwardResult fwd = m1_forward(disc, cc.xi, v, uhat, cc.noise, opts.workers);
        for (int it = 1; it <= opts.max_iters; ++it)
        {
            BackwardSolution bs = m2_backward(disc, fwd.alpha, fwd.xhat, cc.noise, cc.xi, bo);
            auto [y2, z2] = distance(bs, have_old ? &old : nullptr, opts.rho);
            double ry = std::sqrt(y2);
            double rz = std::sqrt(z2);
            double res = ry + rz;
            cc.residual_y.push_back(ry);
            cc.residual_z.push_back(rz);
            cc.residuals.push_back(res);
            cc.iterations = it;
            if (!std::isfinite(res))
                throw DivergenceError("non-finite residual", cc.residuals, it);
            bool done = res <= opts.tol || (opts.rel_tol > 0 && res <= opts.rel_tol * cc.residuals.front());
            if (done)
            {
                cc.converged = true;
                store(cc, fwd, std::move(bs));
                return cc;
            }
            if (it == opts.max_iters)
                break;
            if (!have_old || opts.damping == 1.0)
                old = adjoints_of(bs);
            else
            {
                Adjoints fresh = adjoints_of(bs);
                for (std::size_t k = 0; k < fresh.beta.size(); ++k)
                {
                    blend(old.beta[k], fresh.beta[k], opts.damping);
                    blend(old.ycheck[k], fresh.ycheck[k], opts.damping);
                    blend(old.zeta[k], fresh.zeta[k], opts.damping);
                    blend(old.gamma[k], fresh.gamma[k], opts.damping);
                    blend(old.zcheck[k], fresh.zcheck[k], opts.damping);
                }
            }
            have_old = true;
            for (int k = 0; k < sc.K; ++k)
                blend(v[static_cast<std::size_t>(k)], bs.v[static_cast<std::size_t>(k)], opts.damping);
            uhat = mean_control(disc, v);
            fwd = m1_forward(disc, cc.xi, v, uhat, cc.noise, opts.workers);
        }
    }
    catch (const DivergenceError&)
    {
        throw;
    }
    catch (const Error& e)
    {
        if (e.code() != ErrorCode::divergence)
            throw;
        throw DivergenceError(std::string("iteration blew up: ") + e.what(), cc.residuals, e.index());
    }
    throw DivergenceError("no convergence within " + std::to_string(opts.max_iters) + " iterations",
                          cc.residuals, cc.iterations);
}

//---------------------------------------------------------------------------//
// Mean system

namespace
{

struct AffineMap
{
    const Discretization& disc;
    std::vector<Mat> xi;
    std::vector<NoiseEnsemble> noise;
    const PathEnsemble* frozen_xhat = nullptr;
    const PathEnsemble* frozen_uhat = nullptr;
    FrozenMeans frozen;

    int size() const { return disc.sc.K * disc.grid.steps * disc.sc.d; }

    std::vector<PathEnsemble> unpack(const Vec& x) const
    {
        const int S = disc.grid.steps;
        const int d = disc.sc.d;
        std::vector<PathEnsemble> v;
        for (int k = 0; k < disc.sc.K; ++k)
        {
            v.push_back(control_with_history(disc, 1));
            for (int i = 0; i < S; ++i)
                v.back().vec(0, i) = x.segment((k * S + i) * d, d);
        }
        return v;
    }

    Vec pack(const std::vector<PathEnsemble>& v) const
    {
        const int S = disc.grid.steps;
        const int d = disc.sc.d;
        Vec x(size());
        for (int k = 0; k < disc.sc.K; ++k)
            for (int i = 0; i < S; ++i)
                x.segment((k * S + i) * d, d) = v[static_cast<std::size_t>(k)].vec(0, i);
        return x;
    }

    std::pair<ForwardResult, BackwardSolution> run(const Vec& x) const
    {
        auto v = unpack(x);
        PathEnsemble uhat = frozen_uhat ? *frozen_uhat : mean_control(disc, v);
        ForwardResult fwd = m1_forward(disc, xi, v, uhat, noise, 1, frozen_xhat);
        BackwardOptions bo;
        bo.fit_field = false;
        const PathEnsemble& xh = frozen_xhat ? *frozen_xhat : fwd.xhat;
        BackwardSolution bs = m2_backward(disc, fwd.alpha, xh, noise, xi, bo, frozen);
        return {std::move(fwd), std::move(bs)};
    }

    Vec apply(const Vec& x) const { return pack(run(x).second.v); }

    // Fixed point of the affine map x -> c + L x by dense LU.
    Vec fixed_point(double& defect) const
    {
        const int n = size();
        Vec c = apply(Vec::Zero(n));
        Mat IL = Mat::Identity(n, n);
        for (int j = 0; j < n; ++j)
            IL.col(j) -= apply(Vec::Unit(n, j)) - c;
        Eigen::PartialPivLU<Mat> lu(IL);
        Vec x = lu.solve(c);
        defect = (apply(x) - x).norm();
        if (!x.allFinite())
            throw Error(ErrorCode::divergence, "ccfix", "mean system is singular");
        return x;
    }
};

}  // namespace

CCSolution mean_system_solve(const Discretization& disc)
{
    const Scenario& sc = disc.sc;
    if (sc.has_diffusion())
        throw Error(ErrorCode::subclass, "ccfix", "mean system needs D = Dhat = 0");
    const TimeGrid& g = disc.grid;
    NoiseEnsemble quiet;
    quiet.M = 1;
    quiet.steps = g.steps;
    quiet.dW.assign(static_cast<std::size_t>(g.steps), 0.0);

    AffineMap map{disc, {}, {}, nullptr, nullptr, {}};
    for (int k = 0; k < sc.K; ++k)
    {
        map.xi.push_back(sc.xi[static_cast<std::size_t>(k)].mean.transpose());
        map.noise.push_back(quiet);
    }
    double defect = 0;
    Vec vbar = map.fixed_point(defect);

    CCSolution cc;
    cc.disc = disc;
    cc.opts.M = 1;
    cc.xi = map.xi;
    cc.noise = map.noise;
    {
        auto [fwd, bs] = map.run(vbar);
        store(cc, fwd, std::move(bs));
    }
    cc.residuals = {defect};
    cc.residual_y = {defect};
    cc.residual_z = {0.0};
    cc.iterations = 1;
    cc.converged = true;

    // Response of one agent to a unit shift of its initial state, with every
    // mean field frozen at the solution.
    const int n = sc.n;
    const int S = g.steps;
    const int d = sc.d;
    AffineMap frozen{disc, {}, map.noise, &cc.xhat, &cc.uhat, {&cc.yhat, &cc.zeta}};
    std::vector<Vec> response;
    for (int j = 0; j < n; ++j)
    {
        frozen.xi.clear();
        for (int k = 0; k < sc.K; ++k)
            frozen.xi.push_back((sc.xi[static_cast<std::size_t>(k)].mean + Vec::Unit(n, j)).transpose());
        double fd = 0;
        response.push_back(frozen.fixed_point(fd) - vbar);
    }
    cc.field.assign(static_cast<std::size_t>(sc.K), ControlField{});
    for (int k = 0; k < sc.K; ++k)
    {
        ControlField& f = cc.field[static_cast<std::size_t>(k)];
        f.xi_features = true;
        f.steps.resize(static_cast<std::size_t>(S));
        RegressionFit basis;
        basis.degree = 1;
        basis.mean = sc.xi[static_cast<std::size_t>(k)].mean;
        basis.scale = Vec::Ones(n);
        basis.terms.push_back({});
        for (int j = 0; j < n; ++j)
        {
            basis.kept.push_back(j);
            basis.terms.push_back({j});
        }
        for (int i = 0; i < S; ++i)
        {
            FieldStep& fs = f.steps[static_cast<std::size_t>(i)];
            fs.basis = basis;
            fs.coef.resize(n + 1, d);
            fs.coef.row(0) = vbar.segment((k * S + i) * d, d).transpose();
            for (int j = 0; j < n; ++j)
                fs.coef.row(j + 1) = response[static_cast<std::size_t>(j)].segment((k * S + i) * d, d).transpose();
        }
    }
    return cc;
}

//---------------------------------------------------------------------------//

Vec theta3(const Discretization& disc, const std::vector<PathEnsemble>& yhat, const std::vector<PathEnsemble>& zeta,
           int i)
{
    const int j = i + disc.grid.m_theta;
    Vec out = Vec::Zero(disc.sc.d);
    if (j + 1 > disc.grid.steps)
        return out;
    const Mat& Bt = disc.tb.at(disc.tb.Btilde, j);
    for (int l = 0; l < disc.sc.K; ++l)
        out += disc.sc.pi[static_cast<std::size_t>(l)] * Bt.transpose()
               * (yhat[static_cast<std::size_t>(l)].vec(0, j + 1) + zeta[static_cast<std::size_t>(l)].vec(0, j + 1));
    return out;
}

Vec decentralized_control(const Discretization& disc, int type, int i, const Vec& p_now, const Vec& p_adv,
                          const Vec& q_now, const Vec& q_adv, const Vec& th3)
{
    const CoeffTables& tb = disc.tb;
    const int j = i + disc.grid.m_theta;
    Vec rhs = tb.at(tb.B, i).transpose() * p_now + tb.at(tb.D, i).transpose() * q_now + th3;
    if (j <= disc.grid.steps - 1)
        rhs += tb.at(tb.Bhat, j).transpose() * p_adv + tb.at(tb.Dhat, j).transpose() * q_adv;
    return -disc.dc.type[static_cast<std::size_t>(type)].RRinv[static_cast<std::size_t>(i)] * rhs;
}

Vec decentralized_control(const CCSolution& cc, int type, int i, const Vec& p_now, const Vec& p_adv,
                          const Vec& q_now, const Vec& q_adv)
{
    return decentralized_control(cc.disc, type, i, p_now, p_adv, q_now, q_adv, theta3(cc.disc, cc.yhat, cc.zeta, i));
}

ResidualReport cc_residual(const CCSolution& cc)
{
    const Discretization& disc = cc.disc;
    BackwardOptions bo;
    bo.ce = cc.opts.ce;
    bo.workers = cc.opts.workers;
    bo.fit_field = false;
    PathEnsemble uhat = mean_control(disc, cc.v);
    ForwardResult fwd = m1_forward(disc, cc.xi, cc.v, uhat, cc.noise, cc.opts.workers);
    BackwardSolution bs = m2_backward(disc, fwd.alpha, fwd.xhat, cc.noise, cc.xi, bo);
    Adjoints old{cc.beta, cc.ycheck, cc.zeta, cc.gamma, cc.zcheck};
    auto [y2, z2] = distance(bs, &old, cc.opts.rho);
    ResidualReport r;
    r.dY = std::sqrt(y2);
    r.dZ = std::sqrt(z2);
    r.total = r.dY + r.dZ;
    r.mean_defect = std::sqrt(sq_diff_norm(cc.xhat, &fwd.xhat, 0.0));
    return r;
}

void write_meanfields_csv(const CCSolution& cc, const std::string& hash, std::ostream& os)
{
    const Scenario& sc = cc.disc.sc;
    const TimeGrid& g = cc.disc.grid;
    os << "# scenario_hash=" << hash << '\n';
    os << "t";
    for (int c = 0; c < sc.n; ++c)
        os << ",xhat_" << c;
    for (int c = 0; c < sc.d; ++c)
        os << ",uhat_" << c;
    for (int k = 0; k < sc.K; ++k)
        for (int c = 0; c < sc.n; ++c)
            os << ",yhat_" << k << '_' << c << ",zeta_" << k << '_' << c;
    os << '\n';
    os.precision(17);
    for (int i = 0; i <= g.steps; ++i)
    {
        os << g.t(i);
        for (int c = 0; c < sc.n; ++c)
            os << ',' << cc.xhat.vec(0, i)(c);
        for (int c = 0; c < sc.d; ++c)
            os << ',' << cc.uhat.vec(0, i)(c);
        for (int k = 0; k < sc.K; ++k)
            for (int c = 0; c < sc.n; ++c)
                os << ',' << cc.yhat[static_cast<std::size_t>(k)].vec(0, i)(c) << ','
                   << cc.zeta[static_cast<std::size_t>(k)].vec(0, i)(c);
        os << '\n';
    }
}

std::string cc_header_json(const CCSolution& cc, const std::string& hash)
{
    nlohmann::json j;
    j["scenario_hash"] = hash;
    j["converged"] = cc.converged;
    j["iterations"] = cc.iterations;
    j["residuals"] = cc.residuals;
    j["residual_y"] = cc.residual_y;
    j["residual_z"] = cc.residual_z;
    j["grid"] = {{"T", cc.disc.grid.T}, {"h", cc.disc.grid.h}, {"steps", cc.disc.grid.steps},
                 {"m_delta", cc.disc.grid.m_delta}, {"m_theta", cc.disc.grid.m_theta}};
    j["options"] = {{"max_iters", cc.opts.max_iters}, {"tol", cc.opts.tol},       {"rel_tol", cc.opts.rel_tol},
                    {"rho", cc.opts.rho},             {"damping", cc.opts.damping}, {"M", cc.opts.M},
                    {"seed", cc.opts.seed},           {"antithetic", cc.opts.antithetic},
                    {"degree", cc.opts.ce.degree},    {"ridge", cc.opts.ce.ridge}};
    return j.dump(2);
}

}  // namespace mfsoc
