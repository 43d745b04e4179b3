// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace mfsoc
{

namespace
{

Mat zero(int r, int c)
{
    return Mat::Zero(r, c);
}

double min_sym_eig(const Mat& m)
{
    if (m.size() == 0)
        return 0;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double max_sym_eig(const Mat& m)
{
    if (m.size() == 0)
        return 0;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

bool symmetric(const Mat& m)
{
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

}  // namespace

//---------------------------------------------------------------------------//
// MatPath

MatPath MatPath::constant(const Mat& v)
{
    MatPath p(static_cast<int>(v.rows()), static_cast<int>(v.cols()));
    Segment s;
    s.value = v;
    p.segs_.push_back(std::move(s));
    return p;
}

void MatPath::add_segment(Segment s)
{
    if (s.value.rows() != rows_ || s.value.cols() != cols_)
        throw Error(ErrorCode::structure, "scenario", "segment value has wrong shape");
    segs_.push_back(std::move(s));
}

Mat MatPath::at(double t) const
{
    for (const auto& s : segs_)
        if (s.from <= t && t < s.until)
            return s.value;
    return Mat::Zero(rows_, cols_);
}

double MatPath::max_norm() const
{
    double m = 0;
    for (const auto& s : segs_)
        m = std::max(m, s.value.size() ? s.value.cwiseAbs().maxCoeff() : 0.0);
    return m;
}

bool MatPath::is_zero() const
{
    for (const auto& s : segs_)
        if (s.value.size() && s.value.cwiseAbs().maxCoeff() != 0.0)
            return false;
    return true;
}

bool MatPath::has_bounded_segments() const
{
    return std::any_of(segs_.begin(), segs_.end(), [](const Segment& s) { return s.bounded; });
}

MatPath MatPath::scaled(double s) const
{
    MatPath p = *this;
    for (auto& seg : p.segs_)
        seg.value *= s;
    return p;
}

//---------------------------------------------------------------------------//
// Scenario

Scenario Scenario::zeros(int K, int n, int d)
{
    Scenario sc;
    sc.K = K;
    sc.n = n;
    sc.d = d;
    sc.pi.assign(static_cast<std::size_t>(K), 1.0 / K);
    for (int k = 0; k < K; ++k)
    {
        sc.A.emplace_back(n, n);
        sc.Ahat.emplace_back(n, n);
        sc.R.emplace_back(d, d);
        sc.Rtilde.emplace_back(d, d);
        InitialLaw law;
        law.mean = Vec::Zero(n);
        law.cov = Mat::Zero(n, n);
        sc.xi.push_back(law);
    }
    sc.Atilde = MatPath(n, n);
    sc.B = MatPath(n, d);
    sc.Bhat = MatPath(n, d);
    sc.Btilde = MatPath(n, d);
    sc.D = MatPath(n, d);
    sc.Dhat = MatPath(n, d);
    sc.Q = MatPath(n, n);
    sc.Qtilde = MatPath(n, n);
    sc.S = MatPath(n, n);
    sc.Stilde = MatPath(n, n);
    sc.G = Mat::Zero(n, n);
    sc.Gamma = Mat::Zero(n, n);
    sc.x0 = MatPath(n, 1);
    sc.u0 = MatPath(d, 1);
    return sc;
}

Scenario Scenario::scaled_coefficients(double s) const
{
    Scenario o = *this;
    for (int k = 0; k < K; ++k)
    {
        o.A[k] = A[k].scaled(s);
        o.Ahat[k] = Ahat[k].scaled(s);
        o.R[k] = R[k].scaled(s);
        o.Rtilde[k] = Rtilde[k].scaled(s);
    }
    for (auto [dst, src] : {std::pair{&o.Atilde, &Atilde}, {&o.B, &B}, {&o.Bhat, &Bhat}, {&o.Btilde, &Btilde},
                            {&o.D, &D}, {&o.Dhat, &Dhat}, {&o.Q, &Q}, {&o.Qtilde, &Qtilde}, {&o.S, &S},
                            {&o.Stilde, &Stilde}})
        *dst = src->scaled(s);
    o.G = G * s;
    o.Gamma = Gamma * s;
    return o;
}

//---------------------------------------------------------------------------//
// Validation

bool ValidationReport::pass() const
{
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string ValidationReport::summary() const
{
    std::ostringstream os;
    for (const auto& c : checks)
    {
        os << (c.pass ? "pass " : "FAIL ") << c.name;
        if (!c.detail.empty())
            os << ": " << c.detail;
        os << "\n";
    }
    return os.str();
}

void check_structure(const Scenario& sc)
{
    auto bad = [](const std::string& what) { throw Error(ErrorCode::structure, "scenario", what); };
    if (sc.K < 1 || sc.n < 1 || sc.d < 1)
        bad("K, n and d must be positive");
    if (!(sc.T > 0))
        bad("T must be positive");
    if (sc.delta < 0 || sc.theta < 0)
        bad("delays must be nonnegative");
    auto K = static_cast<std::size_t>(sc.K);
    if (sc.pi.size() != K)
        bad("pi has " + std::to_string(sc.pi.size()) + " entries, expected K = " + std::to_string(sc.K));
    if (sc.A.size() != K || sc.Ahat.size() != K || sc.R.size() != K || sc.Rtilde.size() != K || sc.xi.size() != K)
        bad("per-type coefficient lists must have K entries");
    auto shape = [&](const MatPath& p, int r, int c, const std::string& name) {
        if (p.rows() != r || p.cols() != c)
            bad(name + " is " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) + ", expected "
                + std::to_string(r) + "x" + std::to_string(c));
    };
    for (int k = 0; k < sc.K; ++k)
    {
        auto sfx = "[" + std::to_string(k) + "]";
        shape(sc.A[k], sc.n, sc.n, "A" + sfx);
        shape(sc.Ahat[k], sc.n, sc.n, "Ahat" + sfx);
        shape(sc.R[k], sc.d, sc.d, "R" + sfx);
        shape(sc.Rtilde[k], sc.d, sc.d, "Rtilde" + sfx);
        if (sc.xi[k].mean.size() != sc.n || sc.xi[k].cov.rows() != sc.n || sc.xi[k].cov.cols() != sc.n)
            bad("initial law" + sfx + " has wrong dimension");
    }
    shape(sc.Atilde, sc.n, sc.n, "Atilde");
    for (auto [p, nm] : {std::pair{&sc.B, "B"}, {&sc.Bhat, "Bhat"}, {&sc.Btilde, "Btilde"}, {&sc.D, "D"},
                         {&sc.Dhat, "Dhat"}})
        shape(*p, sc.n, sc.d, nm);
    for (auto [p, nm] : {std::pair{&sc.Q, "Q"}, {&sc.Qtilde, "Qtilde"}, {&sc.S, "S"}, {&sc.Stilde, "Stilde"}})
        shape(*p, sc.n, sc.n, nm);
    if (sc.G.rows() != sc.n || sc.G.cols() != sc.n)
        bad("G must be n x n");
    if (sc.Gamma.rows() != sc.n || sc.Gamma.cols() != sc.n)
        bad("Gamma must be n x n");
    shape(sc.x0, sc.n, 1, "x0");
    shape(sc.u0, sc.d, 1, "u0");
}

ValidationReport validate_scenario(const Scenario& sc, double r_min)
{
    if (!(r_min > 0))
        throw Error(ErrorCode::usage, "scenario", "r_min must be positive");
    check_structure(sc);
    ValidationReport rep;

    // A1
    {
        Check c{"A1 probability vector", true, "", -1, 0};
        double s = std::accumulate(sc.pi.begin(), sc.pi.end(), 0.0);
        for (std::size_t k = 0; k < sc.pi.size(); ++k)
            if (!(sc.pi[k] > 0))
            {
                c.pass = false;
                c.index = static_cast<long>(k);
                c.value = sc.pi[k];
                c.detail = "pi[" + std::to_string(k) + "] is not positive";
                break;
            }
        if (c.pass && std::abs(s - 1.0) > 1e-12)
        {
            c.pass = false;
            c.value = s;
            std::ostringstream os;
            os << "does not sum to 1 (sum = " << s << ")";
            c.detail = os.str();
        }
        rep.checks.push_back(c);
    }

    // A2
    {
        Check c{"A2 initial data", true, "", -1, 0};
        for (int k = 0; k < sc.K && c.pass; ++k)
        {
            const auto& law = sc.xi[k];
            if (!law.mean.allFinite() || !law.cov.allFinite())
            {
                c.pass = false;
                c.index = k;
                c.detail = "non-finite initial law";
            }
            else if (law.sampler == Sampler::gaussian && (!symmetric(law.cov) || min_sym_eig(law.cov) < -1e-12))
            {
                c.pass = false;
                c.index = k;
                c.value = min_sym_eig(law.cov);
                c.detail = "covariance of type " + std::to_string(k) + " is not symmetric PSD";
            }
        }
        for (const auto* p : {&sc.x0, &sc.u0})
            for (const auto& s : p->segments())
                if (!s.value.allFinite())
                {
                    c.pass = false;
                    c.detail = "non-finite pre-history";
                }
        rep.checks.push_back(c);
    }

    // A3
    {
        Check c{"A3 bounded coefficients", true, "", -1, 0};
        std::vector<const MatPath*> all = {&sc.Atilde, &sc.B, &sc.Bhat, &sc.Btilde, &sc.D, &sc.Dhat};
        for (int k = 0; k < sc.K; ++k)
        {
            all.push_back(&sc.A[k]);
            all.push_back(&sc.Ahat[k]);
        }
        for (const auto* p : all)
            if (!std::isfinite(p->max_norm()))
            {
                c.pass = false;
                c.detail = "coefficient with unbounded entries";
            }
        rep.checks.push_back(c);
    }

    // A4
    {
        auto psd_path = [&](const MatPath& p, const std::string& nm) {
            Check c{"A4 " + nm + " symmetric PSD", true, "", -1, 0};
            for (std::size_t j = 0; j < p.segments().size(); ++j)
            {
                const Mat& v = p.segments()[j].value;
                double e = min_sym_eig(v);
                if (!symmetric(v) || e < -1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff()))
                {
                    c.pass = false;
                    c.index = static_cast<long>(j);
                    c.value = e;
                    std::ostringstream os;
                    os << "segment " << j << " min eigenvalue " << e;
                    c.detail = os.str();
                    break;
                }
            }
            rep.checks.push_back(c);
        };
        psd_path(sc.Q, "Q");
        psd_path(sc.Qtilde, "Qtilde");
        {
            Check c{"A4 G symmetric PSD", true, "", -1, 0};
            double e = min_sym_eig(sc.G);
            if (!symmetric(sc.G) || e < -1e-12 * std::max(1.0, sc.G.cwiseAbs().maxCoeff()))
            {
                c.pass = false;
                c.value = e;
                c.detail = "G min eigenvalue " + std::to_string(e);
            }
            rep.checks.push_back(c);
        }
        // R >> 0 witnessed by r_min; Rtilde is required PSD (it may vanish).
        for (int k = 0; k < sc.K; ++k)
        {
            Check c{"A4 R[" + std::to_string(k) + "] >= r_min", true, "", -1, 0};
            if (sc.R[k].segments().empty())
            {
                c.pass = false;
                c.value = 0;
                c.detail = "R is zero";
            }
            for (std::size_t j = 0; j < sc.R[k].segments().size() && c.pass; ++j)
            {
                const Mat& v = sc.R[k].segments()[j].value;
                double e = min_sym_eig(v);
                if (!symmetric(v) || e < r_min)
                {
                    c.pass = false;
                    c.index = static_cast<long>(j);
                    c.value = e;
                    std::ostringstream os;
                    os << "segment " << j << " min eigenvalue " << e << " < r_min " << r_min;
                    c.detail = os.str();
                }
            }
            rep.checks.push_back(c);
            Check ct{"A4 Rtilde[" + std::to_string(k) + "] symmetric PSD", true, "", -1, 0};
            for (std::size_t j = 0; j < sc.Rtilde[k].segments().size() && ct.pass; ++j)
            {
                const Mat& v = sc.Rtilde[k].segments()[j].value;
                double e = min_sym_eig(v);
                if (!symmetric(v) || e < -1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff()))
                {
                    ct.pass = false;
                    ct.index = static_cast<long>(j);
                    ct.value = e;
                    ct.detail = "segment " + std::to_string(j) + " is not PSD";
                }
            }
            rep.checks.push_back(ct);
        }
        // Tails: explicit segments reaching past T must vanish there.
        auto tail = [&](const MatPath& p, double span, const std::string& nm) {
            Check c{"A4 " + nm + " tail vanishes after T", true, "", -1, 0};
            for (std::size_t j = 0; j < p.segments().size(); ++j)
            {
                const auto& s = p.segments()[j];
                if (!s.bounded || s.value.cwiseAbs().maxCoeff() == 0.0)
                    continue;
                if (span > 0 && s.until > sc.T && s.from < sc.T + span)
                {
                    c.pass = false;
                    c.index = static_cast<long>(j);
                    c.value = s.value.cwiseAbs().maxCoeff();
                    std::ostringstream os;
                    os << "segment " << j << " is nonzero on (T, T+" << span << "]";
                    c.detail = os.str();
                    break;
                }
            }
            rep.checks.push_back(c);
        };
        tail(sc.Qtilde, sc.delta, "Qtilde");
        tail(sc.Stilde, sc.delta, "Stilde");
        for (int k = 0; k < sc.K; ++k)
            tail(sc.Rtilde[k], sc.theta, "Rtilde[" + std::to_string(k) + "]");
    }
    return rep;
}

//---------------------------------------------------------------------------//
// Tabulation and derived products

CoeffTables tabulate(const Scenario& sc, const TimeGrid& g)
{
    check_structure(sc);
    CoeffTables tb;
    tb.grid = g;
    tb.lo = -g.history_len;
    tb.hi = g.steps + g.history_len;
    const double probe = 1e-9 * g.h;
    auto tab = [&](const MatPath& p, bool tail_zero) {
        std::vector<Mat> v;
        v.reserve(static_cast<std::size_t>(tb.hi - tb.lo + 1));
        for (int i = tb.lo; i <= tb.hi; ++i)
        {
            if (tail_zero && i >= g.steps)
                v.push_back(Mat::Zero(p.rows(), p.cols()));
            else
                v.push_back(p.at(g.t(i) + probe));
        }
        return v;
    };
    for (int k = 0; k < sc.K; ++k)
    {
        tb.A.push_back(tab(sc.A[k], false));
        tb.Ahat.push_back(tab(sc.Ahat[k], false));
        tb.R.push_back(tab(sc.R[k], false));
        tb.Rtilde.push_back(tab(sc.Rtilde[k], true));
    }
    tb.Atilde = tab(sc.Atilde, false);
    tb.B = tab(sc.B, false);
    tb.Bhat = tab(sc.Bhat, false);
    tb.Btilde = tab(sc.Btilde, false);
    tb.D = tab(sc.D, false);
    tb.Dhat = tab(sc.Dhat, false);
    tb.Q = tab(sc.Q, false);
    tb.Qtilde = tab(sc.Qtilde, true);
    tb.S = tab(sc.S, false);
    tb.Stilde = tab(sc.Stilde, true);
    for (int i = -g.history_len; i < 0; ++i)
    {
        tb.x0.push_back(sc.x0.at(g.t(i) + probe).col(0));
        tb.u0.push_back(sc.u0.at(g.t(i) + probe).col(0));
    }
    return tb;
}

Mat combined_R(const CoeffTables& tb, int k, int i)
{
    return tb.at(tb.R[k], i) + tb.at(tb.Rtilde[k], i + tb.grid.m_theta);
}

Mat combined_Q(const CoeffTables& tb, int i)
{
    return tb.at(tb.Q, i) + tb.at(tb.Qtilde, i + tb.grid.m_delta);
}

Mat combined_S(const CoeffTables& tb, int i)
{
    const Mat& Q = tb.at(tb.Q, i);
    const Mat& S = tb.at(tb.S, i);
    const Mat& Qt = tb.at(tb.Qtilde, i + tb.grid.m_delta);
    const Mat& St = tb.at(tb.Stilde, i + tb.grid.m_delta);
    return Q * S + S.transpose() * Q - S.transpose() * Q * S + Qt * St + St.transpose() * Qt
           - St.transpose() * Qt * St;
}

Mat combined_G(const Scenario& sc)
{
    return sc.G * sc.Gamma + sc.Gamma.transpose() * sc.G - sc.Gamma.transpose() * sc.G * sc.Gamma;
}

DerivedCoeffs derived_coefficients(const Scenario& sc, const TimeGrid& g)
{
    CoeffTables tb = tabulate(sc, g);
    DerivedCoeffs dc;
    const int N = g.steps;
    const int mt = g.m_theta;
    dc.GG = combined_G(sc);
    for (int i = 0; i <= N; ++i)
    {
        dc.QQ.push_back(combined_Q(tb, i));
        dc.SS.push_back(combined_S(tb, i));
    }
    for (int k = 0; k < sc.K; ++k)
    {
        TypeDerived td;
        // R inverse on [-m_theta, N]
        std::vector<Mat> inv;
        for (int i = -mt; i <= N; ++i)
        {
            Mat RR = combined_R(tb, k, i);
            Eigen::LDLT<Mat> ldlt(RR);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || min_sym_eig(RR) <= 0)
                throw Error(ErrorCode::validation, "scenario",
                            "R + Rtilde(t+theta) is not positive definite for type " + std::to_string(k), i);
            inv.push_back(ldlt.solve(Mat::Identity(sc.d, sc.d)));
            if (i >= 0)
                td.RR.push_back(RR);
        }
        auto Ri = [&](int i) -> const Mat& { return inv[static_cast<std::size_t>(i + mt)]; };
        for (auto& v : td.BB)
            v.reserve(static_cast<std::size_t>(N + 1));
        for (int i = 0; i <= N; ++i)
        {
            const Mat& B = tb.at(tb.B, i);
            const Mat& Bh = tb.at(tb.Bhat, i);
            const Mat& Bt = tb.at(tb.Btilde, i);
            const Mat& D = tb.at(tb.D, i);
            const Mat& Dh = tb.at(tb.Dhat, i);
            const Mat& Bm = tb.at(tb.B, i - mt);
            const Mat& Dm = tb.at(tb.D, i - mt);
            const Mat& Bhp = tb.at(tb.Bhat, i + mt);
            const Mat& Btp = tb.at(tb.Btilde, i + mt);
            const Mat& Dhp = tb.at(tb.Dhat, i + mt);
            const Mat& R0 = Ri(i);
            const Mat& Rm = Ri(i - mt);
            td.RRinv.push_back(R0);
            td.BB[1].push_back(B * R0 * B.transpose());
            td.BB[2].push_back(Bt * Rm * Bm.transpose());
            td.BB[3].push_back(D * R0 * B.transpose());
            td.BB[4].push_back(Dh * Rm * Bm.transpose());
            td.BB[5].push_back(B * R0 * Bhp.transpose());
            td.BB[6].push_back(Bh * Rm * Bm.transpose());
            td.BB[7].push_back(Bh * Rm * Bh.transpose());
            td.BB[8].push_back(Bt * Rm * Bh.transpose());
            td.BB[9].push_back(D * R0 * Bhp.transpose());
            td.BB[10].push_back(Dh * Rm * Bh.transpose());
            td.BB[11].push_back(B * R0 * Btp.transpose());
            td.BB[12].push_back(Bh * Rm * Bt.transpose());
            td.BB[13].push_back(D * R0 * Btp.transpose());
            td.BB[14].push_back(Dh * Rm * Bt.transpose());
            td.DD[1].push_back(B * R0 * D.transpose());
            td.DD[2].push_back(B * R0 * Dhp.transpose());
            td.DD[3].push_back(Bt * Rm * Dm.transpose());
            td.DD[4].push_back(Bt * Rm * Dh.transpose());
            td.DD[5].push_back(D * R0 * D.transpose());
            td.DD[6].push_back(D * R0 * Dhp.transpose());
            td.DD[7].push_back(Dh * Rm * Dm.transpose());
            td.DD[8].push_back(Dh * Rm * Dh.transpose());
            td.DD[9].push_back(Bh * Rm * Dm.transpose());
            td.DD[10].push_back(Bh * Rm * Dh.transpose());
        }
        dc.type.push_back(std::move(td));
    }
    return dc;
}

//---------------------------------------------------------------------------//
// Stacked blocks and norms

StackedBlocks stacked_blocks(const Scenario& sc, const CoeffTables& tb, const DerivedCoeffs& dc, int i)
{
    const int K = sc.K;
    const int n = sc.n;
    const int md = tb.grid.m_delta;
    auto blk = [n](Mat& M, int r, int c, const Mat& v) { M.block(r * n, c * n, n, n) = v; };
    auto BBk = [&](int k, int j) -> const Mat& { return dc.type[k].BB[j][static_cast<std::size_t>(i)]; };
    auto DDk = [&](int k, int j) -> const Mat& { return dc.type[k].DD[j][static_cast<std::size_t>(i)]; };
    const auto& pi = sc.pi;

    StackedBlocks s;
    s.A = zero(K * n, K * n);
    s.Ahat = zero(K * n, K * n);
    s.Atilde1 = zero(K * n, K * n);
    for (int k = 0; k < K; ++k)
    {
        blk(s.A, k, k, tb.at(tb.A[k], i));
        blk(s.Ahat, k, k, tb.at(tb.Ahat[k], i));
        for (int l = 0; l < K; ++l)
            blk(s.Atilde1, k, l, tb.at(tb.Atilde, i) * pi[l]);
    }
    auto diag_first = [&](int j, bool isB) {
        Mat M = zero(K * n, 3 * K * n);
        for (int k = 0; k < K; ++k)
            blk(M, k, k, isB ? BBk(k, j) : DDk(k, j));
        return M;
    };
    auto diag_only = [&](int j, bool isB) {
        Mat M = zero(K * n, K * n);
        for (int k = 0; k < K; ++k)
            blk(M, k, k, isB ? BBk(k, j) : DDk(k, j));
        return M;
    };
    auto column = [&](int j) {
        Mat M = zero(K * n, n);
        for (int k = 0; k < K; ++k)
            M.block(k * n, 0, n, n) = DDk(k, j);
        return M;
    };
    auto column_pi = [&](int j) {
        Mat sum = zero(n, n);
        for (int l = 0; l < K; ++l)
            sum += pi[l] * DDk(l, j);
        Mat M = zero(K * n, n);
        for (int k = 0; k < K; ++k)
            M.block(k * n, 0, n, n) = sum;
        return M;
    };
    // Row k: [first(l) | row(k) pi_l | row(k) pi_l]
    auto pi_rows = [&](int j_first, double first_sign, int j_row) {
        Mat M = zero(K * n, 3 * K * n);
        for (int k = 0; k < K; ++k)
            for (int l = 0; l < K; ++l)
            {
                if (j_first > 0)
                    blk(M, k, l, first_sign * pi[l] * BBk(l, j_first));
                if (j_row > 0)
                {
                    blk(M, k, K + l, pi[l] * BBk(k, j_row));
                    blk(M, k, 2 * K + l, pi[l] * BBk(k, j_row));
                }
            }
        return M;
    };
    s.B1 = diag_first(1, true);
    s.B2 = diag_first(5, true);
    s.B3 = diag_first(6, true);
    s.B4 = diag_first(7, true);
    s.B1pi = pi_rows(2, 1.0, 0);
    s.B2pi = pi_rows(8, -1.0, 12);
    s.B3pi = pi_rows(0, 1.0, 11);
    s.B4pi = pi_rows(0, 1.0, 13);
    s.B5pi = pi_rows(0, 1.0, 14);
    s.B5 = diag_only(3, true);
    s.B6 = diag_only(4, true);
    s.B7 = diag_only(9, true);
    s.B8 = diag_only(10, true);
    s.D1 = diag_only(1, false);
    s.D2 = diag_only(2, false);
    s.D1pi = column_pi(3);
    s.D2pi = column_pi(4);
    s.D3 = column(9);
    s.D4 = column(10);
    s.D5 = diag_first(5, false);
    s.D6 = diag_first(7, false);
    s.D7 = diag_first(6, false);
    s.D8 = diag_first(8, false);

    s.Acal = zero(3 * K * n, 3 * K * n);
    s.Acal_hat = zero(3 * K * n, 3 * K * n);
    s.Atilde2 = zero(3 * K * n, 3 * K * n);
    Mat Ahat_adv = zero(K * n, K * n);
    for (int k = 0; k < K; ++k)
        blk(Ahat_adv, k, k, tb.at(tb.Ahat[k], i + md));
    for (int b = 0; b < 3; ++b)
    {
        s.Acal.block(b * K * n, b * K * n, K * n, K * n) = s.A.transpose();
        s.Acal_hat.block(b * K * n, b * K * n, K * n, K * n) = Ahat_adv.transpose();
    }
    Mat AtT = tb.at(tb.Atilde, i + md).transpose();
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < K; ++l)
            for (int rb : {0, 2})
            {
                blk(s.Atilde2, rb * K + k, K + l, AtT * pi[l]);
                blk(s.Atilde2, rb * K + k, 2 * K + l, AtT * pi[l]);
            }
    s.Qb = zero(3 * K * n, K * n);
    s.Gb = zero(3 * K * n, K * n);
    s.Spi = zero(3 * K * n, K * n);
    s.Gpi = zero(3 * K * n, K * n);
    const Mat& QQ = dc.QQ[static_cast<std::size_t>(i)];
    const Mat& SS = dc.SS[static_cast<std::size_t>(i)];
    for (int k = 0; k < K; ++k)
    {
        blk(s.Qb, k, k, QQ);
        blk(s.Qb, K + k, k, QQ);
        blk(s.Gb, k, k, sc.G);
        blk(s.Gb, K + k, k, sc.G);
        for (int l = 0; l < K; ++l)
            for (int rb : {0, 2})
            {
                blk(s.Spi, rb * K + k, l, SS * pi[l]);
                blk(s.Gpi, rb * K + k, l, dc.GG * pi[l]);
            }
    }
    return s;
}

NormBundle block_norms(const Scenario& sc)
{
    double h = sc.h > 0 ? sc.h : sc.T / 100.0;
    return block_norms(sc, build_grid(sc.T, h, sc.delta, sc.theta));
}

NormBundle block_norms(const Scenario& sc, const TimeGrid& g)
{
    CoeffTables tb = tabulate(sc, g);
    DerivedCoeffs dc = derived_coefficients(sc, g);
    NormBundle nb;
    nb.rho1_star = -std::numeric_limits<double>::infinity();
    nb.rho2_star = -std::numeric_limits<double>::infinity();
    auto upd = [](double& k, const Mat& m) { k = std::max(k, spectral_norm(m)); };
    for (int i = 0; i <= g.steps; ++i)
    {
        StackedBlocks s = stacked_blocks(sc, tb, dc, i);
        nb.rho1_star = std::max(nb.rho1_star, max_sym_eig(s.A));
        nb.rho2_star = std::max(nb.rho2_star, max_sym_eig(s.Acal));
        upd(nb.k[0], s.A);
        upd(nb.k0_prime, s.Acal);
        upd(nb.k[1], s.Ahat);
        upd(nb.k[2], s.Atilde1);
        upd(nb.k[3], s.B1);
        upd(nb.k[4], s.B3);
        upd(nb.k[5], s.B2pi);
        upd(nb.k[6], s.B1pi);
        upd(nb.k[7], s.B2);
        upd(nb.k[8], s.B3pi);
        upd(nb.k[9], s.B4);
        upd(nb.k[10], s.D1);
        upd(nb.k[11], s.D3);
        upd(nb.k[12], s.D2pi);
        upd(nb.k[13], s.D1pi);
        upd(nb.k[14], s.D2);
        upd(nb.k[15], s.D4);
        upd(nb.k[16], s.Qb);
        upd(nb.k[17], s.Spi);
        upd(nb.k[18], s.Atilde2);
        upd(nb.k[19], s.Acal_hat);
        upd(nb.k[20], s.B5);
        upd(nb.k[21], s.B6);
        upd(nb.k[22], s.B7);
        upd(nb.k[23], s.B8);
        upd(nb.k[24], s.B4pi);
        upd(nb.k[25], s.B5pi);
        upd(nb.k[26], s.D5);
        upd(nb.k[27], s.D6);
        upd(nb.k[28], s.D7);
        upd(nb.k[29], s.D8);
        upd(nb.k[30], s.Gb);
        upd(nb.k[31], s.Gpi);
    }
    return nb;
}

//---------------------------------------------------------------------------//
// Type assignment

MixReport empirical_mix(int N, const std::vector<double>& pi, MixPolicy policy, std::uint64_t seed)
{
    if (N < 1)
        throw Error(ErrorCode::usage, "scenario", "population size must be at least 1");
    const auto K = pi.size();
    MixReport r;
    r.counts.assign(K, 0);
    if (policy == MixPolicy::exact_proportion)
    {
        std::vector<double> rem(K);
        int used = 0;
        for (std::size_t k = 0; k < K; ++k)
        {
            double q = N * pi[k];
            r.counts[k] = static_cast<int>(std::floor(q + 1e-12));
            rem[k] = q - r.counts[k];
            used += r.counts[k];
        }
        std::vector<std::size_t> order(K);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
        for (std::size_t j = 0; used < N; ++j, ++used)
            r.counts[order[j % K]] += 1;
        for (std::size_t k = 0; k < K; ++k)
            r.assignment.insert(r.assignment.end(), static_cast<std::size_t>(r.counts[k]), static_cast<int>(k));
    }
    else
    {
        std::mt19937_64 gen(mix64(seed));
        std::discrete_distribution<int> dist(pi.begin(), pi.end());
        for (int i = 0; i < N; ++i)
        {
            int k = dist(gen);
            r.assignment.push_back(k);
            r.counts[static_cast<std::size_t>(k)] += 1;
        }
    }
    r.pi_N.resize(K);
    r.eps_N = 0;
    for (std::size_t k = 0; k < K; ++k)
    {
        r.pi_N[k] = static_cast<double>(r.counts[k]) / N;
        r.eps_N = std::max(r.eps_N, std::abs(r.pi_N[k] - pi[k]));
    }
    return r;
}

//---------------------------------------------------------------------------//

Discretization discretize(const Scenario& sc, const TimeGrid& grid)
{
    Discretization d;
    d.sc = sc;
    d.grid = grid;
    d.tb = tabulate(sc, grid);
    d.dc = derived_coefficients(sc, grid);
    return d;
}

TimeGrid scenario_grid(const Scenario& sc, double h)
{
    double step = h > 0 ? h : (sc.h > 0 ? sc.h : sc.T / 100.0);
    return build_grid(sc.T, step, sc.delta, sc.theta);
}

}  // namespace mfsoc
