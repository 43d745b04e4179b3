// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/wellposedness.hpp"

#include <cmath>
#include <doctest.h>
#include <json.hpp>
#include <random>

using namespace mfsoc;

namespace
{

Scenario load(const char* f)
{
    return load_scenario_file(std::string(MFSOC_SCENARIO_DIR) + "/" + f);
}

}  // namespace

TEST_CASE("discount root degenerate cases are closed form")
{
    CHECK(solve_discount_root(0.0, 0.3, 1.5) == 1.5);
    CHECK(solve_discount_root(2.0, 0.0, 1.5) == doctest::Approx(-0.5));
    CHECK_THROWS_AS(solve_discount_root(-1.0, 0.1, 0.0), Error);
}

TEST_CASE("discount root satisfies its equation on random inputs")
{
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> c(0.0, 5.0), d(0.0, 2.0), r(-10.0, 10.0);
    for (int t = 0; t < 500; ++t)
    {
        double cc = c(gen), dd = d(gen), rr = r(gen);
        double x = solve_discount_root(cc, dd, rr);
        CHECK(std::abs(x + cc * std::exp(x * dd) - rr) <= 1e-12 * std::max(1.0, std::abs(rr)));
    }
}

TEST_CASE("stable decoupled scenario certifies on the horizon-free branch")
{
    Certificate c = certify(load("reference.yaml"));
    CHECK(c.pass);
    CHECK(c.branch == CertBranch::horizon_free);
    CHECK(c.L < 0);
    CHECK(c.modulus < 1);
}

TEST_CASE("unstable drift needs the horizon-dependent branch and a short horizon")
{
    Scenario sc = load("small_horizon.yaml");
    Certificate c = certify(sc);
    CHECK(c.L >= 0);
    CHECK(c.branch == CertBranch::horizon_dependent);
    CHECK(c.pass);
    CHECK(c.rho_t1 >= 1.0);
    CHECK(c.rho_t2 <= 0.0);
    CertifyOptions longer;
    longer.T = 1.0;
    Certificate l = certify(sc, longer);
    CHECK_FALSE(l.pass);
    CHECK(l.modulus > c.modulus);
}

TEST_CASE("modulus grows with the horizon and with coefficient scale")
{
    Scenario sc = load("small_horizon.yaml");
    double prev = 0;
    for (double T : {0.1, 0.2, 0.5, 1.0})
    {
        CertifyOptions o;
        o.T = T;
        double m = certify(sc, o).modulus;
        CHECK(m > prev);
        prev = m;
    }
    Scenario ref = load("reference.yaml");
    CHECK(certify(ref.scaled_coefficients(3.0)).modulus > certify(ref).modulus);
}

TEST_CASE("strong loop gain fails with a named dominant term")
{
    Certificate c = certify(load("zero_coupling.yaml"));
    CHECK_FALSE(c.pass);
    CHECK_FALSE(c.dominant.empty());
    CHECK_FALSE(c.note.empty());
}

TEST_CASE("certificate JSON carries the hash and the branch")
{
    Scenario sc = load("reference.yaml");
    auto j = nlohmann::json::parse(certificate_json(certify(sc), scenario_hash(sc)));
    CHECK(j["scenario_hash"] == scenario_hash(sc));
    CHECK(j["branch"] == "horizon_free");
    CHECK(j["pass"] == true);
    CHECK(j["k"].size() == 32);
}

TEST_CASE("rho override is honoured")
{
    Scenario sc = load("reference.yaml");
    CertifyOptions o;
    o.rho_override = 0.25;
    Certificate c = certify(sc, o);
    CHECK(c.rho == 0.25);
    CHECK(c.rho_t1 == doctest::Approx(0.25 + c.lambda1));
}
