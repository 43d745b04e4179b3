// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/ccfix.hpp"

#include <cmath>
#include <doctest.h>

using namespace mfsoc;

namespace
{

Scenario load(const char* f)
{
    return load_scenario_file(std::string(MFSOC_SCENARIO_DIR) + "/" + f);
}

Discretization disc_of(const Scenario& sc, double h = 0)
{
    return discretize(sc, scenario_grid(sc, h));
}

PicardOptions quick(int M = 200)
{
    PicardOptions o;
    o.M = M;
    o.tol = 1e-12;
    o.rel_tol = 1e-8;
    o.max_iters = 60;
    o.seed = 3;
    return o;
}

double max_gap(const PathEnsemble& a, const PathEnsemble& b)
{
    double m = 0;
    for (int i = 0; i <= a.grid().steps; ++i)
        m = std::max(m, (a.vec(0, i) - b.vec(0, i)).cwiseAbs().maxCoeff());
    return m;
}

}  // namespace

TEST_CASE("certified scenario converges and leaves a small residual")
{
    Discretization disc = disc_of(load("reference.yaml"), 0.02);
    CCSolution cc = picard_solve(disc, quick());
    CHECK(cc.converged);
    CHECK(cc.residuals.back() <= 1e-8 * cc.residuals.front());
    ResidualReport r = cc_residual(cc);
    CHECK(r.total < 1e-6 * cc.residuals.front());
    CHECK(r.mean_defect < 1e-8);
}

TEST_CASE("Picard iterates contract geometrically on a certified scenario")
{
    Discretization disc = disc_of(load("reference.yaml"), 0.02);
    CCSolution cc = picard_solve(disc, quick());
    REQUIRE(cc.residuals.size() >= 4);
    for (std::size_t j = 2; j + 1 < cc.residuals.size(); ++j)
        CHECK(cc.residuals[j] < cc.residuals[j - 1]);
}

TEST_CASE("mean system and Picard agree without diffusion")
{
    Scenario sc = load("reference.yaml");
    sc.D = MatPath(1, 1);
    sc.Dhat = MatPath(1, 1);
    Discretization disc = disc_of(sc, 0.02);
    CCSolution mean = mean_system_solve(disc);
    PicardOptions o = quick(64);
    o.rel_tol = 1e-10;
    CCSolution pic = picard_solve(disc, o);
    CHECK(max_gap(mean.xhat, pic.xhat) < 1e-8);
    CHECK(max_gap(mean.uhat, pic.uhat) < 1e-8);
    for (int k = 0; k < sc.K; ++k)
        CHECK(max_gap(mean.yhat[k], pic.yhat[k]) < 1e-8);
}

TEST_CASE("mean system refuses diffusion")
{
    Discretization disc = disc_of(load("reference.yaml"), 0.02);
    try
    {
        mean_system_solve(disc);
        FAIL("expected an error");
    }
    catch (const Error& e)
    {
        CHECK(e.code() == ErrorCode::subclass);
    }
}

TEST_CASE("iteration budget exhaustion reports the residual history")
{
    Discretization disc = disc_of(load("reference.yaml"), 0.02);
    PicardOptions o = quick();
    o.max_iters = 2;
    o.rel_tol = 0;
    o.tol = 1e-300;
    try
    {
        picard_solve(disc, o);
        FAIL("expected divergence");
    }
    catch (const DivergenceError& e)
    {
        CHECK(e.code() == ErrorCode::divergence);
        CHECK(e.history().size() == 2);
    }
}

TEST_CASE("invalid solver options are usage errors")
{
    Discretization disc = disc_of(load("reference.yaml"), 0.02);
    for (int which = 0; which < 3; ++which)
    {
        PicardOptions o = quick();
        if (which == 0)
            o.damping = 0;
        if (which == 1)
            o.M = 0;
        if (which == 2)
            o.tol = o.rel_tol = 0;
        try
        {
            picard_solve(disc, o);
            FAIL("expected a usage error");
        }
        catch (const Error& e)
        {
            CHECK(e.code() == ErrorCode::usage);
        }
    }
}

TEST_CASE("advanced adjoint terms drop out near the horizon")
{
    Scenario sc = load("delayed_deterministic.yaml");
    Discretization disc = disc_of(sc, 0.01);
    const int S = disc.grid.steps;
    const int mt = disc.grid.m_theta;
    Vec p = Vec::Constant(1, 0.7), q = Vec::Zero(1), th = Vec::Zero(1);
    Vec big = Vec::Constant(1, 1e6);
    Vec inside = decentralized_control(disc, 0, S - mt - 1, p, big, q, q, th);
    Vec outside = decentralized_control(disc, 0, S - mt, p, big, q, q, th);
    Vec outside_zero = decentralized_control(disc, 0, S - mt, p, Vec::Zero(1), q, q, th);
    CHECK(std::abs(inside(0)) > 1e3);
    CHECK(outside == outside_zero);
    // Past T - theta the delayed control weight is masked too, leaving R = 1.
    CHECK(outside(0) == doctest::Approx(-0.7));
}

TEST_CASE("damped iteration reaches the same fixed point")
{
    Discretization disc = disc_of(load("reference.yaml"), 0.02);
    CCSolution a = picard_solve(disc, quick());
    PicardOptions o = quick();
    o.damping = 0.7;
    o.max_iters = 120;
    CCSolution b = picard_solve(disc, o);
    CHECK(max_gap(a.xhat, b.xhat) < 1e-7);
    CHECK(max_gap(a.uhat, b.uhat) < 1e-7);
}

TEST_CASE("solutions do not depend on the worker count")
{
    Discretization disc = disc_of(load("reference.yaml"), 0.05);
    PicardOptions o = quick(101);
    CCSolution a = picard_solve(disc, o);
    o.workers = 3;
    CCSolution b = picard_solve(disc, o);
    CHECK(a.residuals == b.residuals);
    CHECK(a.xhat.raw() == b.xhat.raw());
}
