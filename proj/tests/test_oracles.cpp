// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/oracles.hpp"
#include "mfsoc/population.hpp"

#include <cmath>
#include <doctest.h>
#include <random>

using namespace mfsoc;

namespace
{

Scenario load(const char* f)
{
    return load_scenario_file(std::string(MFSOC_SCENARIO_DIR) + "/" + f);
}

Mat scalar(double v)
{
    return Mat::Constant(1, 1, v);
}

Vec unit()
{
    return Vec::Ones(1);
}

PathEnsemble random_control(const Discretization& disc, int N, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    PathEnsemble u = control_with_history(disc, N);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < disc.grid.steps; ++i)
            for (int c = 0; c < disc.sc.d; ++c)
                u.vec(j, i)(c) = nd(gen);
    return u;
}

}  // namespace

TEST_CASE("no running or terminal weight gives a zero Riccati solution")
{
    RiccatiSolution s = riccati_lq(scalar(0.3), scalar(1), scalar(0), scalar(1), scalar(0), 1.0, 0.01, unit());
    for (const auto& P : s.P)
        CHECK(P(0, 0) == 0.0);
    CHECK(s.value == 0.0);
    CHECK(s.x.back()(0) == doctest::Approx(std::exp(0.3)).epsilon(1e-10));
}

TEST_CASE("unit scalar problem has the hyperbolic tangent solution")
{
    RiccatiSolution s = riccati_lq(scalar(0), scalar(1), scalar(1), scalar(1), scalar(0), 1.0, 0.01, unit());
    CHECK(s.P[0](0, 0) == doctest::Approx(0.761594155955765).epsilon(1e-10));
    for (int i : {0, 25, 50, 99})
        CHECK(s.P[static_cast<std::size_t>(i)](0, 0) == doctest::Approx(std::tanh(1.0 - 0.01 * i)).epsilon(1e-10));
    CHECK(s.P.back()(0, 0) == 0.0);
    // x(t) = cosh(T - t) / cosh(T) for this problem.
    CHECK(s.x[50](0) == doctest::Approx(std::cosh(0.5) / std::cosh(1.0)).epsilon(1e-9));
    CHECK(s.value == doctest::Approx(0.5 * std::tanh(1.0)).epsilon(1e-10));
}

TEST_CASE("Riccati solution satisfies its differential equation")
{
    Mat A(2, 2), B(2, 1), Q = Mat::Identity(2, 2), R = scalar(0.5), G = 0.3 * Mat::Identity(2, 2);
    A << -0.5, 1.0, 0.0, 0.2;
    B << 0.0, 1.0;
    const double h = 0.001;
    RiccatiSolution s = riccati_lq(A, B, Q, R, G, 1.0, h, Vec::Ones(2));
    Mat Rinv = R.inverse();
    for (int i : {1, 300, 900})
    {
        Mat dP = (s.P[static_cast<std::size_t>(i + 1)] - s.P[static_cast<std::size_t>(i - 1)]) / (2 * h);
        CHECK((dP - riccati_rhs(A, B, Q, Rinv, s.P[static_cast<std::size_t>(i)])).norm() < 1e-5);
        CHECK((s.P[static_cast<std::size_t>(i)] - s.P[static_cast<std::size_t>(i)].transpose()).norm() == 0.0);
        CHECK(Eigen::SelfAdjointEigenSolver<Mat>(s.P[static_cast<std::size_t>(i)]).eigenvalues().minCoeff() >= 0);
    }
}

TEST_CASE("doubling B and quadrupling R leaves P and the state unchanged")
{
    auto a = riccati_lq(scalar(-0.5), scalar(1), scalar(1), scalar(1), scalar(0.5), 1.0, 0.01, unit());
    auto b = riccati_lq(scalar(-0.5), scalar(2), scalar(1), scalar(4), scalar(0.5), 1.0, 0.01, unit());
    for (std::size_t i = 0; i < a.P.size(); ++i)
    {
        CHECK(b.P[i](0, 0) == doctest::Approx(a.P[i](0, 0)).epsilon(1e-12));
        CHECK(b.gain[i](0, 0) == doctest::Approx(0.5 * a.gain[i](0, 0)).epsilon(1e-12));
        CHECK(b.x[i](0) == doctest::Approx(a.x[i](0)).epsilon(1e-12));
    }
}

TEST_CASE("Riccati oracle rejects an indefinite control weight")
{
    CHECK_THROWS_AS(riccati_lq(scalar(0), scalar(1), scalar(1), scalar(-1), scalar(0), 1.0, 0.01, unit()), Error);
}

TEST_CASE("control-only cost has the zero control as its optimum")
{
    Scenario sc = load("delayed_deterministic.yaml");
    sc.Q = MatPath(1, 1);
    sc.Qtilde = MatPath(1, 1);
    sc.G = Mat::Zero(1, 1);
    sc.u0 = MatPath(1, 1);
    Discretization disc = discretize(sc, scenario_grid(sc, 0.02));
    Mat xi = Mat::Constant(3, 1, 1.0);
    QPSolution q = deterministic_qp(disc, {0, 0, 0}, xi);
    CHECK(q.converged);
    double m = 0;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < disc.grid.steps; ++i)
            m = std::max(m, std::abs(q.control.vec(j, i)(0)));
    CHECK(m < 1e-12);
    CHECK(q.objective == doctest::Approx(0.0));
}

TEST_CASE("identical agents receive identical optimal controls")
{
    Scenario sc = load("delayed_deterministic.yaml");
    Discretization disc = discretize(sc, scenario_grid(sc, 0.02));
    Mat xi = Mat::Constant(2, 1, 0.8);
    QPSolution q = deterministic_qp(disc, {0, 0}, xi, 1e-10);
    for (int i = 0; i < disc.grid.steps; ++i)
        CHECK(q.control.vec(0, i)(0) == doctest::Approx(q.control.vec(1, i)(0)).epsilon(1e-7));
}

TEST_CASE("single-agent QP approaches the Riccati value at first order in h")
{
    Scenario sc = load("riccati_tanh.yaml");
    double exact = 0.5 * std::tanh(1.0);
    double prev = 0;
    for (double h : {0.02, 0.01})
    {
        Discretization disc = discretize(sc, scenario_grid(sc, h));
        QPSolution q = deterministic_qp(disc, {0}, Mat::Constant(1, 1, 1.0), 1e-10);
        double err = std::abs(q.objective - exact);
        CHECK(err < 2.0 * h);
        if (prev > 0)
            CHECK(err / prev == doctest::Approx(0.5).epsilon(0.2));
        prev = err;
    }
}

TEST_CASE("QP gradient matches central differences of the objective")
{
    Scenario sc = load("delayed_deterministic.yaml");
    Discretization disc = discretize(sc, scenario_grid(sc, 0.02));
    std::vector<int> types = {0, 0, 0};
    Mat xi(3, 1);
    xi << 0.5, 1.0, 1.7;
    PathEnsemble u = random_control(disc, 3, 1);
    PathEnsemble dir = random_control(disc, 3, 2);
    for (int j = 0; j < 3; ++j)
        for (int i = -disc.grid.history_len; i < 0; ++i)
            dir.vec(j, i).setZero();
    PathEnsemble g = qp_gradient(disc, types, xi, u);
    double analytic = 0;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < disc.grid.steps; ++i)
            analytic += g.vec(j, i).dot(dir.vec(j, i));
    const double s = 1e-4;
    PathEnsemble up = u, dn = u;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < disc.grid.steps; ++i)
        {
            up.vec(j, i) += s * dir.vec(j, i);
            dn.vec(j, i) -= s * dir.vec(j, i);
        }
    double fd = (qp_objective(disc, types, xi, up) - qp_objective(disc, types, xi, dn)) / (2 * s);
    CHECK(fd == doctest::Approx(analytic).epsilon(1e-7));
}

TEST_CASE("QP objective is the social cost of the integrated population")
{
    Scenario sc = load("delayed_deterministic.yaml");
    Discretization disc = discretize(sc, scenario_grid(sc, 0.02));
    std::vector<int> types = {0, 0, 0, 0};
    Mat xi(4, 1);
    xi << 0.5, 1.0, 1.5, 2.0;
    PathEnsemble u = random_control(disc, 4, 5);
    RealizedPaths rp = integrate_population(disc, types, xi, u, nullptr);
    auto c = agent_costs(disc, types, rp.state, u, rp.xbar);
    double total = 0;
    for (double v : c)
        total += v;
    CHECK(qp_objective(disc, types, xi, u) == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("optimum lies below any other control")
{
    Scenario sc = load("delayed_deterministic.yaml");
    Discretization disc = discretize(sc, scenario_grid(sc, 0.02));
    std::vector<int> types = {0, 0};
    Mat xi = Mat::Constant(2, 1, 1.0);
    QPSolution q = deterministic_qp(disc, types, xi, 1e-10);
    CHECK(q.kkt <= 1e-10);
    for (std::uint64_t seed : {1u, 2u, 3u})
    {
        PathEnsemble u = q.control;
        PathEnsemble e = random_control(disc, 2, seed);
        for (int j = 0; j < 2; ++j)
            for (int i = 0; i < disc.grid.steps; ++i)
                u.vec(j, i) += 1e-2 * e.vec(j, i);
        CHECK(qp_objective(disc, types, xi, u) > q.objective);
    }
}

TEST_CASE("QP oracle requires deterministic dynamics")
{
    Discretization disc = discretize(load("zero_coupling.yaml"), scenario_grid(load("zero_coupling.yaml")));
    try
    {
        deterministic_qp(disc, {0}, Mat::Constant(1, 1, 1.0));
        FAIL("expected an error");
    }
    catch (const Error& e)
    {
        CHECK(e.code() == ErrorCode::subclass);
    }
}

TEST_CASE("Riccati comparison refuses coupled scenarios")
{
    Scenario sc = load("delayed_deterministic.yaml");
    CCSolution cc = mean_system_solve(discretize(sc, scenario_grid(sc, 0.05)));
    try
    {
        compare_riccati(cc);
        FAIL("expected an error");
    }
    catch (const Error& e)
    {
        CHECK(e.code() == ErrorCode::subclass);
    }
}

TEST_CASE("mean-field solution of a decoupled problem tracks the Riccati feedback")
{
    Scenario sc = load("riccati_weighted.yaml");
    CCSolution cc = mean_system_solve(discretize(sc, scenario_grid(sc, 0.01)));
    RiccatiComparison rc = compare_riccati(cc);
    CHECK(rc.rel_l2 < 0.02);
}
