// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/backward.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace mfsoc
{

//---------------------------------------------------------------------------//
// Regression

namespace
{

void monomials(int vars, int degree, std::vector<std::vector<int>>& out)
{
    out.clear();
    out.push_back({});
    std::vector<std::vector<int>> frontier{{}};
    for (int deg = 1; deg <= degree; ++deg)
    {
        std::vector<std::vector<int>> next;
        for (const auto& m : frontier)
        {
            int start = m.empty() ? 0 : m.back();
            for (int v = start; v < vars; ++v)
            {
                auto t = m;
                t.push_back(v);
                next.push_back(t);
            }
        }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
}

}  // namespace

Vec RegressionFit::basis_row(const Eigen::Ref<const Vec>& f) const
{
    Vec z(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t c = 0; c < kept.size(); ++c)
        z(static_cast<Eigen::Index>(c)) = (f(kept[c]) - mean(static_cast<Eigen::Index>(c))) / scale(static_cast<Eigen::Index>(c));
    Vec row(basis_size());
    for (int t = 0; t < basis_size(); ++t)
    {
        double v = 1;
        for (int c : terms[static_cast<std::size_t>(t)])
            v *= z(c);
        row(t) = v;
    }
    return row;
}

Mat RegressionFit::basis(const Mat& features) const
{
    Mat phi(features.rows(), basis_size());
    for (Eigen::Index r = 0; r < features.rows(); ++r)
        phi.row(r) = basis_row(features.row(r).transpose()).transpose();
    return phi;
}

Mat RegressionFit::predict(const Mat& features) const
{
    return basis(features) * coef;
}

RegressionFit fit_conditional_expectation(const Mat& features, const Mat& targets, const CondExpOptions& opts)
{
    const Eigen::Index M = features.rows();
    if (targets.rows() != M)
        throw Error(ErrorCode::structure, "backward", "features and targets have different sample counts");
    if (opts.degree < 0)
        throw Error(ErrorCode::usage, "backward", "regression degree must be nonnegative");
    RegressionFit fit;
    fit.degree = opts.degree;
    if (M < 1)
        throw Error(ErrorCode::regression, "backward", "no samples");

    // Standardize and drop constant or duplicate columns.
    std::vector<Vec> zcols;
    std::vector<double> means, scales;
    for (Eigen::Index c = 0; c < features.cols(); ++c)
    {
        double mu = features.col(c).mean();
        double sd = std::sqrt((features.col(c).array() - mu).square().mean());
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mu))))
            continue;
        Vec z = (features.col(c).array() - mu) / sd;
        bool dup = false;
        for (const auto& o : zcols)
            if ((o - z).cwiseAbs().maxCoeff() < 1e-12)
                dup = true;
        if (dup)
            continue;
        fit.kept.push_back(static_cast<int>(c));
        zcols.push_back(z);
        means.push_back(mu);
        scales.push_back(sd);
    }
    fit.mean = Eigen::Map<Vec>(means.data(), static_cast<Eigen::Index>(means.size()));
    fit.scale = Eigen::Map<Vec>(scales.data(), static_cast<Eigen::Index>(scales.size()));
    monomials(static_cast<int>(fit.kept.size()), opts.degree, fit.terms);
    const int b = fit.basis_size();
    if (M < b)
        throw Error(ErrorCode::regression, "backward",
                    "fewer samples (" + std::to_string(M) + ") than basis columns (" + std::to_string(b) + ")");

    Mat phi(M, b);
    for (int t = 0; t < b; ++t)
    {
        Vec col = Vec::Ones(M);
        for (int c : fit.terms[static_cast<std::size_t>(t)])
            col.array() *= zcols[static_cast<std::size_t>(c)].array();
        phi.col(t) = col;
    }
    Mat gram = phi.transpose() * phi;
    for (int t = 1; t < b; ++t)
        gram(t, t) += opts.ridge * static_cast<double>(M);
    Eigen::LDLT<Mat> ldlt(gram);
    if (ldlt.info() != Eigen::Success)
        throw Error(ErrorCode::regression, "backward", "normal equations could not be factored");
    fit.coef = ldlt.solve(phi.transpose() * targets);
    if (!fit.coef.allFinite())
        throw Error(ErrorCode::regression, "backward", "regression produced non-finite coefficients");

    Eigen::SelfAdjointEigenSolver<Mat> es(gram / static_cast<double>(M), Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    fit.cond = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();

    Mat resid = targets - phi * fit.coef;
    double r2 = 0;
    for (Eigen::Index q = 0; q < targets.cols(); ++q)
    {
        double mu = targets.col(q).mean();
        double tot = (targets.col(q).array() - mu).square().sum();
        double res = resid.col(q).squaredNorm();
        r2 += tot > 0 ? 1.0 - res / tot : 1.0;
    }
    fit.r2 = targets.cols() > 0 ? r2 / static_cast<double>(targets.cols()) : 1.0;
    return fit;
}

Vec ControlField::eval(int i, const Eigen::Ref<const Vec>& features) const
{
    const FieldStep& s = steps[static_cast<std::size_t>(i)];
    return s.coef.transpose() * s.basis.basis_row(features);
}

//---------------------------------------------------------------------------//
// Shared pieces

namespace
{

bool nonzero(const Mat& m)
{
    return m.size() > 0 && m.cwiseAbs().maxCoeff() > 0;
}

// Features (x_i, x_{i-m_delta}) of every path; the lagged copy is left out
// when the delay is zero.
Mat state_features(const PathEnsemble& x, int i, int m_delta)
{
    const int M = x.paths();
    const int n = x.dim();
    const int f = m_delta > 0 ? 2 * n : n;
    Mat F(M, f);
    for (int p = 0; p < M; ++p)
    {
        F.row(p).head(n) = x.vec(p, i).transpose();
        if (m_delta > 0)
            F.row(p).tail(n) = x.vec(p, i - m_delta).transpose();
    }
    return F;
}

// Mean-field forcing Sum_l pi_l C(j)' (yhat_l + zeta_l)(j + 1) for lead j = i + lag.
Vec lead_forcing(const Discretization& disc, const std::vector<Mat>& C, int i, int lag,
                 const std::vector<PathEnsemble>& yhat, const std::vector<PathEnsemble>& zeta, int dim)
{
    const int S = disc.grid.steps;
    Vec out = Vec::Zero(dim);
    int j = i + lag;
    if (j + 1 > S)
        return out;
    const Mat& Cj = disc.tb.at(C, j);
    if (!nonzero(Cj))
        return out;
    for (int l = 0; l < disc.sc.K; ++l)
        out += disc.sc.pi[static_cast<std::size_t>(l)] * Cj.transpose()
               * (yhat[static_cast<std::size_t>(l)].vec(0, j + 1) + zeta[static_cast<std::size_t>(l)].vec(0, j + 1));
    return out;
}

void zeta_step(const Discretization& disc, int i, const PathEnsemble& xhat, const std::vector<PathEnsemble>& yhat,
               std::vector<PathEnsemble>& zeta)
{
    const int S = disc.grid.steps;
    const int md = disc.grid.m_delta;
    const double h = disc.grid.h;
    Vec aY = lead_forcing(disc, disc.tb.Atilde, i, md, yhat, zeta, disc.sc.n);
    Vec sx = disc.dc.SS[static_cast<std::size_t>(i)] * xhat.vec(0, i);
    for (int k = 0; k < disc.sc.K; ++k)
    {
        auto& z = zeta[static_cast<std::size_t>(k)];
        Vec next = z.vec(0, i + 1);
        Vec drift = disc.tb.at(disc.tb.A[k], i).transpose() * next - sx + aY;
        if (i + md + 1 <= S)
            drift += disc.tb.at(disc.tb.Ahat[k], i + md).transpose() * z.vec(0, i + md + 1);
        z.vec(0, i) = next + h * drift;
    }
}

}  // namespace

std::vector<PathEnsemble> solve_deterministic_advanced(const Discretization& disc, const PathEnsemble& xhat,
                                                       const std::vector<PathEnsemble>& yhat,
                                                       const std::vector<Vec>& terminal)
{
    const int S = disc.grid.steps;
    std::vector<PathEnsemble> zeta;
    for (int k = 0; k < disc.sc.K; ++k)
    {
        zeta.emplace_back(disc.grid, 1, disc.sc.n, PathKind::deterministic);
        Vec zt = terminal.empty() ? Vec(-disc.dc.GG * xhat.vec(0, S)) : terminal[static_cast<std::size_t>(k)];
        zeta.back().vec(0, S) = zt;
    }
    for (int i = S - 1; i >= 0; --i)
    {
        zeta_step(disc, i, xhat, yhat, zeta);
        for (int k = 0; k < disc.sc.K; ++k)
            if (!zeta[static_cast<std::size_t>(k)].vec(0, i).allFinite())
                throw Error(ErrorCode::divergence, "backward", "non-finite zeta", i);
    }
    return zeta;
}

//---------------------------------------------------------------------------//
// M2

BackwardSolution m2_backward(const Discretization& disc, const std::vector<PathEnsemble>& alpha,
                             const PathEnsemble& xhat, const std::vector<NoiseEnsemble>& noise,
                             const std::vector<Mat>& xi, const BackwardOptions& opts, const FrozenMeans& frozen)
{
    const Scenario& sc = disc.sc;
    const TimeGrid& g = disc.grid;
    const CoeffTables& tb = disc.tb;
    const int S = g.steps;
    const int md = g.m_delta;
    const int mt = g.m_theta;
    const int K = sc.K;
    const int n = sc.n;
    const int d = sc.d;
    const double h = g.h;
    const bool diff = sc.has_diffusion();
    const bool use_frozen = frozen.yhat != nullptr && frozen.zeta != nullptr;

    BackwardSolution sol;
    for (int k = 0; k < K; ++k)
    {
        const int M = alpha[static_cast<std::size_t>(k)].paths();
        sol.beta.emplace_back(g, M, n, PathKind::backward_y);
        sol.ycheck.emplace_back(g, M, n, PathKind::backward_y);
        sol.gamma.emplace_back(g, M, n, PathKind::backward_z);
        sol.zcheck.emplace_back(g, M, n, PathKind::backward_z);
        sol.v.emplace_back(g, M, d, PathKind::control);
        for (int i = -g.history_len; i < 0; ++i)
            sol.v.back().set_all(i, tb.u_hist(i));
        sol.field.emplace_back();
        sol.field.back().xi_features = !diff;
        sol.field.back().steps.resize(static_cast<std::size_t>(S));
    }
    if (use_frozen)
    {
        sol.yhat = *frozen.yhat;
        sol.zeta = *frozen.zeta;
    }
    else
    {
        for (int k = 0; k < K; ++k)
        {
            sol.yhat.emplace_back(g, 1, n, PathKind::deterministic);
            sol.zeta.emplace_back(g, 1, n, PathKind::deterministic);
        }
    }

    // Terminal values.
    const Vec gx = disc.dc.GG * xhat.vec(0, S);
    for (int k = 0; k < K; ++k)
    {
        const auto& a = alpha[static_cast<std::size_t>(k)];
        for (int p = 0; p < a.paths(); ++p)
        {
            Vec ga = sc.G * a.vec(p, S);
            sol.ycheck[static_cast<std::size_t>(k)].vec(p, S) = ga;
            sol.beta[static_cast<std::size_t>(k)].vec(p, S) = ga - gx;
        }
        if (!use_frozen)
        {
            sol.zeta[static_cast<std::size_t>(k)].vec(0, S) = -gx;
            sol.yhat[static_cast<std::size_t>(k)].vec(0, S) = sol.ycheck[static_cast<std::size_t>(k)].mean(S);
        }
    }

    for (int i = S - 1; i >= 0; --i)
    {
        if (!use_frozen)
            zeta_step(disc, i, xhat, sol.yhat, sol.zeta);
        const Vec aY = lead_forcing(disc, tb.Atilde, i, md, sol.yhat, sol.zeta, n);
        const Vec th3 = lead_forcing(disc, tb.Btilde, i, mt, sol.yhat, sol.zeta, d);
        const Vec sx = disc.dc.SS[static_cast<std::size_t>(i)] * xhat.vec(0, i);
        const Mat& QQ = disc.dc.QQ[static_cast<std::size_t>(i)];
        const Mat& B = tb.at(tb.B, i);
        const Mat& D = tb.at(tb.D, i);
        const Mat& Bh_t = tb.at(tb.Bhat, i + mt);
        const Mat& Dh_t = tb.at(tb.Dhat, i + mt);

        for (int k = 0; k < K; ++k)
        {
            const auto& a = alpha[static_cast<std::size_t>(k)];
            auto& beta = sol.beta[static_cast<std::size_t>(k)];
            auto& yc = sol.ycheck[static_cast<std::size_t>(k)];
            auto& gam = sol.gamma[static_cast<std::size_t>(k)];
            auto& zc = sol.zcheck[static_cast<std::size_t>(k)];
            auto& v = sol.v[static_cast<std::size_t>(k)];
            const int M = a.paths();
            const Mat& A = tb.at(tb.A[k], i);
            const Mat& Ah_d = tb.at(tb.Ahat[k], i + md);
            const Mat& Rinv = disc.dc.type[static_cast<std::size_t>(k)].RRinv[static_cast<std::size_t>(i)];

            const bool adv_d = i + md + 1 <= S && nonzero(Ah_d);
            const bool adv_t = i + mt + 1 <= S && nonzero(Bh_t);
            const bool adv_q = diff && i + mt <= S - 1 && nonzero(Dh_t);

            // Target layout: column blocks of width n.
            enum Block
            {
                b1,
                y1,
                bw,
                yw,
                bd,
                yd,
                bt,
                gt,
                nblocks
            };
            int col[nblocks];
            int q = 0;
            auto take = [&](Block blk, bool on) {
                col[blk] = on ? q : -1;
                if (on)
                    q += n;
            };
            take(b1, true);
            take(y1, true);
            take(bw, diff);
            take(yw, diff);
            take(bd, adv_d && md > 0);
            take(yd, adv_d && md > 0);
            take(bt, adv_t && mt > 0);
            take(gt, adv_q && mt > 0);
            if (adv_d && md == 0)
            {
                col[bd] = col[b1];
                col[yd] = col[y1];
            }
            if (adv_t && mt == 0)
                col[bt] = col[b1];

            Mat T(M, q);
            for (int p = 0; p < M; ++p)
            {
                T.row(p).segment(col[b1], n) = beta.vec(p, i + 1).transpose();
                T.row(p).segment(col[y1], n) = yc.vec(p, i + 1).transpose();
                if (diff)
                {
                    double dw = noise[static_cast<std::size_t>(k)].at(p, i);
                    T.row(p).segment(col[bw], n) = dw * beta.vec(p, i + 1).transpose();
                    T.row(p).segment(col[yw], n) = dw * yc.vec(p, i + 1).transpose();
                }
                if (adv_d && md > 0)
                {
                    T.row(p).segment(col[bd], n) = beta.vec(p, i + md + 1).transpose();
                    T.row(p).segment(col[yd], n) = yc.vec(p, i + md + 1).transpose();
                }
                if (adv_t && mt > 0)
                    T.row(p).segment(col[bt], n) = beta.vec(p, i + mt + 1).transpose();
                if (adv_q && mt > 0)
                    T.row(p).segment(col[gt], n) = gam.vec(p, i + mt).transpose();
            }

            Mat P;
            RegressionFit fit;
            if (diff)
            {
                fit = fit_conditional_expectation(state_features(a, i, md), T, opts.ce);
                P = fit.basis(state_features(a, i, md)) * fit.coef;
                StepDiagnostics sd;
                sd.step = i;
                sd.type = k;
                sd.r2 = fit.r2;
                sd.cond = fit.cond;
                sol.diag.push_back(sd);
            }
            else
            {
                P = T;
            }

            double zsq = 0;
            for (int p = 0; p < M; ++p)
            {
                auto blk = [&](int c) -> Vec { return P.row(p).segment(c, n).transpose(); };
                Vec P1 = blk(col[b1]);
                Vec Y1 = blk(col[y1]);
                Vec gm = diff ? Vec(blk(col[bw]) / h) : Vec(Vec::Zero(n));
                Vec zm = diff ? Vec(blk(col[yw]) / h) : Vec(Vec::Zero(n));
                Vec ax = QQ * a.vec(p, i);
                Vec bdrift = A.transpose() * P1 + ax - sx + aY;
                Vec ydrift = A.transpose() * Y1 + ax;
                if (adv_d)
                {
                    bdrift += Ah_d.transpose() * blk(col[bd]);
                    ydrift += Ah_d.transpose() * blk(col[yd]);
                }
                beta.vec(p, i) = P1 + h * bdrift;
                yc.vec(p, i) = Y1 + h * ydrift;
                gam.vec(p, i) = gm;
                zc.vec(p, i) = zm;
                zsq += gm.squaredNorm();

                Vec rhs = B.transpose() * P1 + D.transpose() * gm + th3;
                if (adv_t)
                    rhs += Bh_t.transpose() * blk(col[bt]);
                if (adv_q)
                    rhs += Dh_t.transpose() * (mt > 0 ? Vec(blk(col[gt])) : gm);
                v.vec(p, i) = -Rinv * rhs;
                if (!beta.vec(p, i).allFinite() || !v.vec(p, i).allFinite())
                    throw Error(ErrorCode::divergence, "backward", "non-finite adjoint value", i);
            }
            if (diff && !sol.diag.empty())
                sol.diag.back().z_norm = std::sqrt(zsq / M);

            if (!opts.fit_field)
                continue;
            FieldStep& fs = sol.field[static_cast<std::size_t>(k)].steps[static_cast<std::size_t>(i)];
            if (diff)
            {
                auto cblk = [&](int c) -> Mat { return fit.coef.middleCols(c, n); };
                Mat acc = cblk(col[b1]) * B + (cblk(col[bw]) / h) * D;
                if (adv_t)
                    acc += cblk(col[bt]) * Bh_t;
                if (adv_q)
                    acc += (mt > 0 ? cblk(col[gt]) : Mat(cblk(col[bw]) / h)) * Dh_t;
                fs.basis = fit;
                fs.basis.coef.resize(0, 0);
                fs.coef = -acc * Rinv.transpose();
                fs.coef.row(0) -= (Rinv * th3).transpose();
            }
            else
            {
                Mat V(M, d);
                for (int p = 0; p < M; ++p)
                    V.row(p) = v.vec(p, i).transpose();
                CondExpOptions one = opts.ce;
                one.degree = 1;
                RegressionFit vf = fit_conditional_expectation(xi[static_cast<std::size_t>(k)], V, one);
                fs.coef = vf.coef;
                fs.basis = std::move(vf);
                fs.basis.coef.resize(0, 0);
            }
        }
        if (!use_frozen)
            for (int k = 0; k < K; ++k)
                sol.yhat[static_cast<std::size_t>(k)].vec(0, i) = sol.ycheck[static_cast<std::size_t>(k)].mean(i);
    }
    return sol;
}

//---------------------------------------------------------------------------//

AdjointResult solve_linear_adjoint(const Discretization& disc, int type, const PathEnsemble& state,
                                   const PathEnsemble& driver, const NoiseEnsemble* noise, bool use_regression,
                                   const CondExpOptions& ce)
{
    const TimeGrid& g = disc.grid;
    const int S = g.steps;
    const int md = g.m_delta;
    const int n = driver.dim();
    const int M = driver.paths();
    const double h = g.h;
    AdjointResult r{PathEnsemble(g, M, n, PathKind::backward_y), PathEnsemble(g, M, n, PathKind::backward_z)};
    for (int p = 0; p < M; ++p)
        r.y.vec(p, S) = driver.vec(p, S);
    for (int i = S - 1; i >= 0; --i)
    {
        const Mat& A = disc.tb.at(disc.tb.A[type], i);
        const Mat& Ah = disc.tb.at(disc.tb.Ahat[type], i + md);
        const bool adv = i + md + 1 <= S && nonzero(Ah);
        const bool sep = adv && md > 0;
        const int q = n * ((use_regression ? 2 : 1) + (sep ? 1 : 0));
        Mat T(M, q);
        for (int p = 0; p < M; ++p)
        {
            T.row(p).head(n) = r.y.vec(p, i + 1).transpose();
            int c = n;
            if (use_regression)
            {
                T.row(p).segment(c, n) = noise->at(p, i) * r.y.vec(p, i + 1).transpose();
                c += n;
            }
            if (sep)
                T.row(p).segment(c, n) = r.y.vec(p, i + md + 1).transpose();
        }
        Mat P = T;
        if (use_regression)
        {
            RegressionFit fit = fit_conditional_expectation(state_features(state, i, md), T, ce);
            P = fit.basis(state_features(state, i, md)) * fit.coef;
        }
        for (int p = 0; p < M; ++p)
        {
            Vec Y1 = P.row(p).head(n).transpose();
            int c = n;
            Vec z = Vec::Zero(n);
            if (use_regression)
            {
                z = P.row(p).segment(c, n).transpose() / h;
                c += n;
            }
            Vec drift = A.transpose() * Y1 + driver.vec(p, i);
            if (adv)
                drift += Ah.transpose() * (sep ? Vec(P.row(p).segment(c, n).transpose()) : Y1);
            r.y.vec(p, i) = Y1 + h * drift;
            r.z.vec(p, i) = z;
        }
    }
    return r;
}

void write_diagnostics_csv(const std::vector<StepDiagnostics>& diag, std::ostream& os)
{
    os << "step,type,r2,condition,z_norm\n";
    for (const auto& d : diag)
        os << d.step << ',' << d.type << ',' << d.r2 << ',' << d.cond << ',' << d.z_norm << '\n';
}

}  // namespace mfsoc
