// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/oracles.hpp"
#include "mfsoc/population.hpp"

#include <cmath>
#include <ostream>

namespace mfsoc
{

Mat riccati_rhs(const Mat& A, const Mat& B, const Mat& Q, const Mat& Rinv, const Mat& P)
{
    return -(A.transpose() * P + P * A - P * B * Rinv * B.transpose() * P + Q);
}

RiccatiSolution riccati_lq(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& G, double T,
                           double h, const Vec& x0, int substeps)
{
    if (!(T > 0) || !(h > 0) || substeps < 1)
        throw Error(ErrorCode::usage, "oracles", "Riccati oracle needs T, h > 0 and substeps >= 1");
    Eigen::LDLT<Mat> ldlt(R);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw Error(ErrorCode::validation, "oracles", "R must be positive definite");
    const Mat Rinv = ldlt.solve(Mat::Identity(R.rows(), R.cols()));

    RiccatiSolution s;
    s.T = T;
    s.h = h;
    s.steps = static_cast<int>(std::lround(T / h));
    const int fine = s.steps * substeps;
    const double dt = T / fine;

    // P on the half-step lattice so the closed-loop RK4 has its midpoints.
    std::vector<Mat> half(static_cast<std::size_t>(2 * fine + 1));
    half.back() = G;
    const double hs = dt / 2;
    for (int j = 2 * fine; j > 0; --j)
    {
        const Mat& P = half[static_cast<std::size_t>(j)];
        // Backward in time: dP/ds with s = T - t gives +rhs sign flip.
        Mat k1 = -riccati_rhs(A, B, Q, Rinv, P);
        Mat k2 = -riccati_rhs(A, B, Q, Rinv, P + 0.5 * hs * k1);
        Mat k3 = -riccati_rhs(A, B, Q, Rinv, P + 0.5 * hs * k2);
        Mat k4 = -riccati_rhs(A, B, Q, Rinv, P + hs * k3);
        Mat next = P + hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        next = 0.5 * (next + next.transpose());
        if (!next.allFinite())
            throw Error(ErrorCode::divergence, "oracles", "Riccati solution blew up", j - 1);
        half[static_cast<std::size_t>(j - 1)] = next;
    }
    for (int i = 0; i <= s.steps; ++i)
    {
        s.P.push_back(half[static_cast<std::size_t>(2 * i * substeps)]);
        s.gain.push_back(Rinv * B.transpose() * s.P.back());
    }

    auto f = [&](int j, const Vec& x) -> Vec {
        const Mat& P = half[static_cast<std::size_t>(j)];
        return (A - B * Rinv * B.transpose() * P) * x;
    };
    Vec x = x0;
    s.x.push_back(x);
    for (int m = 0; m < fine; ++m)
    {
        Vec k1 = f(2 * m, x);
        Vec k2 = f(2 * m + 1, x + 0.5 * dt * k1);
        Vec k3 = f(2 * m + 1, x + 0.5 * dt * k2);
        Vec k4 = f(2 * m + 2, x + dt * k3);
        x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        if ((m + 1) % substeps == 0)
            s.x.push_back(x);
    }
    for (int i = 0; i <= s.steps; ++i)
        s.u.push_back(-s.gain[static_cast<std::size_t>(i)] * s.x[static_cast<std::size_t>(i)]);
    s.value = 0.5 * x0.dot(s.P.front() * x0);
    return s;
}

//---------------------------------------------------------------------------//
// Deterministic centralized QP

namespace
{

struct Dynamics
{
    PathEnsemble state;
    PathEnsemble xbar;
    PathEnsemble ubar;
};

Dynamics run_dynamics(const Discretization& disc, const std::vector<int>& type, const Mat& xi,
                      const PathEnsemble& u)
{
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int N = static_cast<int>(type.size());
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    Dynamics dyn{PathEnsemble(g, N, disc.sc.n, PathKind::state), PathEnsemble(g, 1, disc.sc.n, PathKind::deterministic),
                 PathEnsemble(g, 1, disc.sc.d, PathKind::deterministic)};
    for (int i = -g.history_len; i < 0; ++i)
    {
        dyn.state.set_all(i, tb.x_hist(i));
        dyn.xbar.vec(0, i) = tb.x_hist(i);
    }
    for (int i = -g.history_len; i < S; ++i)
    {
        Vec s = Vec::Zero(disc.sc.d);
        for (int j = 0; j < N; ++j)
            s += u.vec(j, i);
        dyn.ubar.vec(0, i) = s / N;
    }
    for (int j = 0; j < N; ++j)
        dyn.state.vec(j, 0) = xi.row(j).transpose();
    for (int i = 0; i < S; ++i)
    {
        Vec s = Vec::Zero(disc.sc.n);
        for (int j = 0; j < N; ++j)
            s += dyn.state.vec(j, i);
        dyn.xbar.vec(0, i) = s / N;
        Vec c = tb.at(tb.Atilde, i) * dyn.xbar.vec(0, i - md) + tb.at(tb.Btilde, i) * dyn.ubar.vec(0, i - mt);
        for (int j = 0; j < N; ++j)
        {
            const int k = type[static_cast<std::size_t>(j)];
            dyn.state.vec(j, i + 1) =
                dyn.state.vec(j, i)
                + g.h * (tb.at(tb.A[k], i) * dyn.state.vec(j, i) + tb.at(tb.Ahat[k], i) * dyn.state.vec(j, i - md)
                         + tb.at(tb.B, i) * u.vec(j, i) + tb.at(tb.Bhat, i) * u.vec(j, i - mt) + c);
        }
    }
    Vec s = Vec::Zero(disc.sc.n);
    for (int j = 0; j < N; ++j)
        s += dyn.state.vec(j, S);
    dyn.xbar.vec(0, S) = s / N;
    return dyn;
}

Mat initial_states(const Discretization& disc, const std::vector<int>& type, const Mat& xi)
{
    if (xi.size() > 0)
    {
        if (xi.rows() != static_cast<Eigen::Index>(type.size()) || xi.cols() != disc.sc.n)
            throw Error(ErrorCode::structure, "oracles", "initial states must be N x n");
        return xi;
    }
    Mat out(static_cast<Eigen::Index>(type.size()), disc.sc.n);
    for (std::size_t j = 0; j < type.size(); ++j)
    {
        const InitialLaw& law = disc.sc.xi[static_cast<std::size_t>(type[j])];
        if (law.sampler != Sampler::point_mass && law.cov.size() > 0 && law.cov.cwiseAbs().maxCoeff() > 0)
            throw Error(ErrorCode::subclass, "oracles",
                        "random initial law; pass the sampled initial states explicitly");
        out.row(static_cast<Eigen::Index>(j)) = law.mean.transpose();
    }
    return out;
}

double dot_controls(const PathEnsemble& a, const PathEnsemble& b, int steps)
{
    double s = 0;
    for (int j = 0; j < a.paths(); ++j)
        for (int i = 0; i < steps; ++i)
            s += a.vec(j, i).dot(b.vec(j, i));
    return s;
}

void axpy(PathEnsemble& y, double a, const PathEnsemble& x, int steps)
{
    for (int j = 0; j < y.paths(); ++j)
        for (int i = 0; i < steps; ++i)
            y.vec(j, i) += a * x.vec(j, i);
}

PathEnsemble zero_controls(const Discretization& disc, int N)
{
    PathEnsemble u(disc.grid, N, disc.sc.d, PathKind::control);
    for (int i = -disc.grid.history_len; i < 0; ++i)
        u.set_all(i, disc.tb.u_hist(i));
    return u;
}

}  // namespace

double qp_objective(const Discretization& disc, const std::vector<int>& type, const Mat& xi0,
                    const PathEnsemble& u)
{
    const Mat xi = initial_states(disc, type, xi0);
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    Dynamics dyn = run_dynamics(disc, type, xi, u);
    double total = 0;
    for (std::size_t q = 0; q < type.size(); ++q)
    {
        const int j = static_cast<int>(q);
        const int k = type[q];
        double run = 0;
        for (int m = 0; m < S; ++m)
        {
            Vec a = dyn.state.vec(j, m) - tb.at(tb.S, m) * dyn.xbar.vec(0, m);
            Vec b = dyn.state.vec(j, m - md) - tb.at(tb.Stilde, m) * dyn.xbar.vec(0, m - md);
            run += a.transpose() * tb.at(tb.Q, m) * a;
            run += b.transpose() * tb.at(tb.Qtilde, m) * b;
            run += u.vec(j, m).transpose() * tb.at(tb.R[k], m) * u.vec(j, m);
            run += u.vec(j, m - mt).transpose() * tb.at(tb.Rtilde[k], m) * u.vec(j, m - mt);
        }
        Vec c = dyn.state.vec(j, S) - disc.sc.Gamma * dyn.xbar.vec(0, S);
        total += 0.5 * (g.h * run + c.dot(disc.sc.G * c));
    }
    return total;
}

PathEnsemble qp_gradient(const Discretization& disc, const std::vector<int>& type, const Mat& xi0,
                         const PathEnsemble& u)
{
    const Mat xi = initial_states(disc, type, xi0);
    const Scenario& sc = disc.sc;
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int N = static_cast<int>(type.size());
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    const double h = g.h;
    Dynamics dyn = run_dynamics(disc, type, xi, u);

    // lam(j, m) = dJ/dx_j(t_m); total over agents kept for the coupling terms.
    PathEnsemble lam(g, N, sc.n, PathKind::backward_y);
    PathEnsemble total(g, 1, sc.n, PathKind::deterministic);
    {
        Vec xb = dyn.xbar.vec(0, S);
        Vec shared = sc.Gamma.transpose() * sc.G * (xb - sc.Gamma * xb);
        for (int j = 0; j < N; ++j)
        {
            lam.vec(j, S) = sc.G * (dyn.state.vec(j, S) - sc.Gamma * xb) - shared;
            total.vec(0, S) += lam.vec(j, S);
        }
    }
    for (int m = S - 1; m >= 0; --m)
    {
        const Mat& Q = tb.at(tb.Q, m);
        const Mat& Sm = tb.at(tb.S, m);
        const Vec xb = dyn.xbar.vec(0, m);
        const Vec shared = Sm.transpose() * Q * (xb - Sm * xb);
        const bool lagged = m + md <= S - 1;
        const Mat& Qt = tb.at(tb.Qtilde, m + md);
        const Mat& St = tb.at(tb.Stilde, m + md);
        const Vec shared_t = lagged ? Vec(St.transpose() * Qt * (xb - St * xb)) : Vec(Vec::Zero(sc.n));
        const bool lead = m + md + 1 <= S;
        Vec coupling = Vec::Zero(sc.n);
        if (lead)
            coupling = (h / N) * tb.at(tb.Atilde, m + md).transpose() * total.vec(0, m + md + 1);
        for (int j = 0; j < N; ++j)
        {
            const int k = type[static_cast<std::size_t>(j)];
            Vec x = dyn.state.vec(j, m);
            Vec gm = Q * (x - Sm * xb) - shared;
            if (lagged)
                gm += Qt * (x - St * xb) - shared_t;
            Vec l = lam.vec(j, m + 1) + h * gm + h * tb.at(tb.A[k], m).transpose() * lam.vec(j, m + 1) + coupling;
            if (lead)
                l += h * tb.at(tb.Ahat[k], m + md).transpose() * lam.vec(j, m + md + 1);
            lam.vec(j, m) = l;
            total.vec(0, m) += l;
        }
    }

    PathEnsemble grad(g, N, sc.d, PathKind::control);
    for (int m = 0; m < S; ++m)
    {
        const bool lead = m + mt + 1 <= S;
        Vec coupling = Vec::Zero(sc.d);
        if (lead)
            coupling = (h / N) * tb.at(tb.Btilde, m + mt).transpose() * total.vec(0, m + mt + 1);
        for (int j = 0; j < N; ++j)
        {
            const int k = type[static_cast<std::size_t>(j)];
            Vec gr = h * tb.at(tb.R[k], m) * u.vec(j, m) + h * tb.at(tb.B, m).transpose() * lam.vec(j, m + 1) + coupling;
            if (m + mt <= S - 1)
                gr += h * tb.at(tb.Rtilde[k], m + mt) * u.vec(j, m);
            if (lead)
                gr += h * tb.at(tb.Bhat, m + mt).transpose() * lam.vec(j, m + mt + 1);
            grad.vec(j, m) = gr;
        }
    }
    return grad;
}

QPSolution deterministic_qp(const Discretization& disc, const std::vector<int>& type, const Mat& xi0, double tol,
                            int max_iters)
{
    if (disc.sc.has_diffusion())
        throw Error(ErrorCode::subclass, "oracles", "the QP oracle needs D = Dhat = 0");
    const Mat xi = initial_states(disc, type, xi0);
    const int N = static_cast<int>(type.size());
    const int S = disc.grid.steps;
    const int dim = N * S * disc.sc.d;
    if (max_iters <= 0)
        max_iters = std::max(100, 4 * dim);

    PathEnsemble zero = zero_controls(disc, N);
    PathEnsemble g0 = qp_gradient(disc, type, xi, zero);
    // Hessian-vector product: gradient of the homogeneous problem.
    // Directions carry the u0 history so that the affine part cancels.
    auto hess = [&](const PathEnsemble& p) {
        PathEnsemble shifted = p;
        for (int j = 0; j < N; ++j)
            for (int i = -disc.grid.history_len; i < 0; ++i)
                shifted.vec(j, i) = zero.vec(j, i);
        PathEnsemble gp = qp_gradient(disc, type, xi, shifted);
        axpy(gp, -1.0, g0, S);
        return gp;
    };
    const double bnorm = std::sqrt(dot_controls(g0, g0, S));
    const double scale = std::max(1.0, bnorm);

    QPSolution sol;
    PathEnsemble x = zero;
    PathEnsemble r = g0;  // residual b - Hx with b = -g0
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < S; ++i)
            r.vec(j, i) = -g0.vec(j, i);
    PathEnsemble p = r;
    for (int j = 0; j < N; ++j)
        for (int i = -disc.grid.history_len; i < 0; ++i)
            p.vec(j, i).setZero();
    double rr = dot_controls(r, r, S);
    int it = 0;
    while (std::sqrt(rr) > tol * scale && it < max_iters)
    {
        PathEnsemble Hp = hess(p);
        double pHp = dot_controls(p, Hp, S);
        if (!(pHp > 0))
            throw Error(ErrorCode::validation, "oracles", "QP Hessian is not positive definite", it);
        double a = rr / pHp;
        axpy(x, a, p, S);
        axpy(r, -a, Hp, S);
        double rr_new = dot_controls(r, r, S);
        double beta = rr_new / rr;
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < S; ++i)
                p.vec(j, i) = r.vec(j, i) + beta * p.vec(j, i);
        rr = rr_new;
        ++it;
    }
    PathEnsemble gx = qp_gradient(disc, type, xi, x);
    sol.kkt = std::sqrt(dot_controls(gx, gx, S)) / scale;
    sol.iterations = it;
    sol.converged = sol.kkt <= tol * 10;
    if (!sol.converged)
        throw Error(ErrorCode::divergence, "oracles",
                    "conjugate gradients stopped with KKT residual " + std::to_string(sol.kkt), it);
    sol.objective = qp_objective(disc, type, xi, x);
    sol.state = run_dynamics(disc, type, xi, x).state;
    sol.control = std::move(x);
    return sol;
}

}  // namespace mfsoc

namespace mfsoc
{

RiccatiComparison compare_riccati(const CCSolution& cc, int substeps)
{
    const Discretization& disc = cc.disc;
    const Scenario& sc = disc.sc;
    const TimeGrid& g = disc.grid;
    if (sc.K != 1 || g.m_delta != 0 || g.m_theta != 0 || sc.has_diffusion())
        throw Error(ErrorCode::subclass, "oracles", "Riccati comparison needs K = 1, no delays and no diffusion");
    auto zero = [](const MatPath& m) { return m.is_zero(); };
    if (!zero(sc.Atilde) || !zero(sc.Btilde) || !zero(sc.S) || !zero(sc.Stilde) || sc.Gamma.cwiseAbs().sum() != 0
        || !zero(sc.Qtilde) || !zero(sc.Rtilde[0]) || !zero(sc.Ahat[0]) || !zero(sc.Bhat))
        throw Error(ErrorCode::subclass, "oracles", "Riccati comparison needs a decoupled scenario without delay terms");

    const double t0 = 0;
    RiccatiComparison rc;
    rc.riccati = riccati_lq(sc.A[0].at(t0), sc.B.at(t0), sc.Q.at(t0), sc.R[0].at(t0), sc.G, sc.T, g.h,
                            sc.xi[0].mean, substeps);
    double num = 0;
    double den = 0;
    for (int i = 0; i < g.steps; ++i)
    {
        rc.u_cc.push_back(cc.uhat.vec(0, i));
        rc.x_cc.push_back(cc.xhat.vec(0, i));
        const Vec& ur = rc.riccati.u[static_cast<std::size_t>(i)];
        num += g.h * (rc.u_cc.back() - ur).squaredNorm();
        den += g.h * ur.squaredNorm();
    }
    rc.x_cc.push_back(cc.xhat.vec(0, g.steps));
    rc.rel_l2 = den > 0 ? std::sqrt(num / den) : std::sqrt(num);

    const ControlField& f = cc.field[0];
    const Vec m = sc.xi[0].mean;
    rc.gain0 = Mat::Zero(sc.d, sc.n);
    const Vec base = f.eval(0, m);
    for (int c = 0; c < sc.n; ++c)
    {
        Vec e = m;
        e(c) += 1;
        rc.gain0.col(c) = -(f.eval(0, e) - base);
    }
    return rc;
}

QPGap qp_gap(const CCSolution& cc, int N, std::uint64_t seed, int workers)
{
    PopulationRun run = simulate_realized_population(cc, N, MixPolicy::exact_proportion, seed, workers);
    QPSolution qp = deterministic_qp(cc.disc, run.mix.assignment, run.xi);
    QPGap out;
    out.N = N;
    out.seed = seed;
    out.decentralized = run.social;
    out.optimum = qp.objective;
    out.gap = (run.social - qp.objective) / N;
    out.kkt = qp.kkt;
    out.iterations = qp.iterations;
    return out;
}

void write_riccati_csv(const RiccatiComparison& rc, const std::string& hash, std::ostream& os)
{
    os.precision(17);
    os << "# scenario_hash=" << hash << "\n";
    os << "# rel_l2=" << rc.rel_l2 << "\n";
    os << "step,t,u_cc,u_riccati,x_cc,x_riccati,P\n";
    for (int i = 0; i < rc.riccati.steps; ++i)
    {
        const auto q = static_cast<std::size_t>(i);
        os << i << ',' << i * rc.riccati.h << ',' << rc.u_cc[q](0) << ',' << rc.riccati.u[q](0) << ','
           << rc.x_cc[q](0) << ',' << rc.riccati.x[q](0) << ',' << rc.riccati.P[q](0, 0) << "\n";
    }
}

void write_qp_gap_csv(const std::vector<QPGap>& rows, const std::string& hash, std::ostream& os)
{
    os.precision(17);
    os << "# scenario_hash=" << hash << "\n";
    os << "N,seed,decentralized,optimum,gap_per_agent,kkt,cg_iterations\n";
    for (const QPGap& r : rows)
        os << r.N << ',' << r.seed << ',' << r.decentralized << ',' << r.optimum << ',' << r.gap << ',' << r.kkt
           << ',' << r.iterations << "\n";
}

}  // namespace mfsoc
