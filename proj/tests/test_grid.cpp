// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/grid.hpp"

#include <cmath>
#include <doctest.h>
#include <sstream>

using namespace mfsoc;

TEST_CASE("grid counts steps and delay lags")
{
    TimeGrid g = build_grid(1.0, 0.01, 0.1, 0.05);
    CHECK(g.steps == 100);
    CHECK(g.m_delta == 10);
    CHECK(g.m_theta == 5);
    CHECK(g.history_len == 10);
    CHECK(g.delta() == doctest::Approx(0.1));
    CHECK(g.t(50) == doctest::Approx(0.5));
}

TEST_CASE("grid rejects steps that do not divide the horizon or delays")
{
    auto code = [](auto fn) {
        try
        {
            fn();
        }
        catch (const Error& e)
        {
            return e.code();
        }
        return ErrorCode::usage;
    };
    CHECK(code([] { build_grid(1.0, 0.03, 0.0, 0.0); }) == ErrorCode::grid);
    CHECK(code([] { build_grid(1.0, 0.01, 0.015, 0.0); }) == ErrorCode::grid);
    CHECK(code([] { build_grid(1.0, 0.0, 0.0, 0.0); }) == ErrorCode::grid);
    CHECK(code([] { build_grid(1.0, 0.01, -0.1, 0.0); }) == ErrorCode::grid);
}

TEST_CASE("history slots are addressable and reads outside raise grid errors")
{
    TimeGrid g = build_grid(1.0, 0.1, 0.2, 0.1);
    PathEnsemble p(g, 2, 1, PathKind::state);
    for (int i = -g.history_len; i <= g.steps; ++i)
        p.vec(1, i)(0) = i;
    CHECK(p.shifted_value(1, 0, -2)(0) == -2);
    CHECK(p.shifted_value(1, 8, 2)(0) == 10);
    CHECK_THROWS_AS(p.shifted_value(1, 9, 2), Error);
    CHECK_THROWS_AS(p.shifted_value(1, 0, -3), Error);
}

TEST_CASE("windows select the documented index ranges")
{
    TimeGrid g = build_grid(1.0, 0.1, 0.3, 0.2);
    auto a = window_mask(g, Window::to_T_minus_delta);
    auto b = window_mask(g, Window::from_theta);
    auto c = window_mask(g, Window::to_theta);
    auto d = window_mask(g, Window::to_T_minus_theta);
    CHECK(a[7] == 1.0);
    CHECK(a[8] == 0.0);
    CHECK(b[1] == 0.0);
    CHECK(b[2] == 1.0);
    CHECK(c[2] == 1.0);
    CHECK(c[3] == 0.0);
    CHECK(d[8] == 1.0);
    CHECK(d[9] == 0.0);
}

TEST_CASE("discounted norm of a constant path has the closed form")
{
    TimeGrid g = build_grid(1.0, 0.001, 0.0, 0.0);
    PathEnsemble p(g, 3, 2, PathKind::deterministic);
    Vec v(2);
    v << 3.0, 4.0;
    for (int i = 0; i <= g.steps; ++i)
        p.set_all(i, v);
    CHECK(discounted_norm(p, 0.0) == doctest::Approx(5.0).epsilon(1e-12));
    double rho = 2.0;
    double sum = 0;
    for (int i = 0; i < g.steps; ++i)
        sum += std::exp(-rho * g.t(i)) * g.h;
    CHECK(discounted_norm(p, rho) == doctest::Approx(5.0 * std::sqrt(sum)).epsilon(1e-12));
}

TEST_CASE("binary round trip is exact")
{
    TimeGrid g = build_grid(0.5, 0.1, 0.1, 0.0);
    PathEnsemble p(g, 3, 2, PathKind::backward_y);
    for (int m = 0; m < 3; ++m)
        for (int i = 0; i <= g.steps; ++i)
            p.vec(m, i) << std::sin(m + i), 1.0 / (1 + m + i);
    std::stringstream ss;
    write_binary(p, ss);
    PathEnsemble q = read_binary(ss, g, PathKind::backward_y);
    REQUIRE(q.paths() == 3);
    for (int m = 0; m < 3; ++m)
        for (int i = 0; i <= g.steps; ++i)
            CHECK(q.vec(m, i) == p.vec(m, i));
    std::stringstream trunc(ss.str().substr(0, 40));
    CHECK_THROWS_AS(read_binary(trunc, g, PathKind::backward_y), Error);
}

TEST_CASE("noise is reproducible, worker independent and antithetic in pairs")
{
    TimeGrid g = build_grid(1.0, 0.01, 0.0, 0.0);
    NoiseEnsemble a = make_noise(g, 64, 7, true, 1);
    NoiseEnsemble b = make_noise(g, 64, 7, true, 3);
    CHECK(a.dW == b.dW);
    for (int i = 0; i < g.steps; ++i)
        CHECK(a.at(5, i) == -a.at(4, i));
    NoiseEnsemble c = make_noise(g, 64, 8, false, 1);
    CHECK(c.dW != a.dW);
    double s2 = 0;
    NoiseEnsemble big = make_noise(g, 4000, 11, false, 1);
    for (double x : big.dW)
        s2 += x * x;
    CHECK(s2 / big.dW.size() == doctest::Approx(g.h).epsilon(0.02));
}

TEST_CASE("pairwise sum is exact on representable data")
{
    std::vector<double> x(1000, 0.5);
    CHECK(pairwise_sum(x) == 500.0);
    std::vector<double> y = {1.0, 2.0, 3.0, 4.0};
    CHECK(pairwise_sum(y.data(), 2, 2) == 4.0);
}
