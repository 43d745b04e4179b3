// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/scenario.hpp"

#include <doctest.h>
#include <string>

using namespace mfsoc;

namespace
{

std::string dir()
{
    return MFSOC_SCENARIO_DIR;
}

ErrorCode code_of(const std::string& text)
{
    try
    {
        parse_scenario(text);
    }
    catch (const Error& e)
    {
        return e.code();
    }
    return static_cast<ErrorCode>(0);
}

const char* kTwoType = R"(
name: two-type
K: 2
n: 2
d: 1
T: 1.0
h: 0.1
delta: 0.2
theta: 0.1
pi: [0.5, 0.5]
types:
  - A: [[-1.0, 0.2], [0.0, -1.0]]
    R: 1.0
    xi: {mean: [1.0, 0.0], cov: [[0.1, 0.0], [0.0, 0.1]], sampler: gaussian}
  - A: -2.0
    R: 2.0
B: [1.0, 0.5]
Q:
  segments:
    - {until: 0.5, value: 1.0}
    - {from: 0.5, value: 2.0}
G: 1.0
Gamma: 0.5
x0:
  segments:
    - {from: -0.2, until: 0.0, value: [1.0, 2.0]}
)";

}  // namespace

TEST_CASE("shipped scenarios parse and validate")
{
    for (const char* f : {"zero_coupling.yaml", "reference.yaml", "riccati_tanh.yaml", "riccati_weighted.yaml",
                          "delayed_deterministic.yaml", "small_horizon.yaml"})
    {
        CAPTURE(f);
        Scenario sc = load_scenario_file(dir() + "/" + f);
        ValidationReport rep = validate_scenario(sc);
        CHECK_MESSAGE(rep.pass(), rep.summary());
    }
}

TEST_CASE("matrices broadcast scalars and accept nested rows")
{
    Scenario sc = parse_scenario(kTwoType);
    CHECK(sc.K == 2);
    CHECK(sc.A[0].at(0.3)(0, 1) == 0.2);
    CHECK(sc.A[1].at(0.3) == -2.0 * Mat::Identity(2, 2));
    CHECK(sc.B.at(0.0)(1, 0) == 0.5);
    CHECK(sc.R[1].at(0.0)(0, 0) == 2.0);
    CHECK(sc.xi[0].sampler == Sampler::gaussian);
    CHECK(sc.xi[1].sampler == Sampler::point_mass);
}

TEST_CASE("segmented coefficients switch at the boundary and vanish outside")
{
    Scenario sc = parse_scenario(kTwoType);
    CHECK(sc.Q.at(0.49)(0, 0) == 1.0);
    CHECK(sc.Q.at(0.5)(0, 0) == 2.0);
    CHECK(sc.x0.at(-0.1)(1, 0) == 2.0);
    CHECK(sc.x0.at(0.0).isZero());
    CHECK(sc.Qtilde.is_zero());
}

TEST_CASE("tabulated history covers the longest delay")
{
    Scenario sc = parse_scenario(kTwoType);
    TimeGrid g = scenario_grid(sc);
    CHECK(g.history_len == 2);
    CoeffTables tb = tabulate(sc, g);
    CHECK(tb.x_hist(-2)(0) == 1.0);
    CHECK(tb.x_hist(-1)(1) == 2.0);
    CHECK(tb.at(tb.Q, 4)(0, 0) == 1.0);
    CHECK(tb.at(tb.Q, 5)(0, 0) == 2.0);
}

TEST_CASE("canonical JSON round trips and the hash tracks content")
{
    Scenario sc = parse_scenario(kTwoType);
    std::string j = canonical_json(sc);
    Scenario back = parse_scenario(j);
    CHECK(canonical_json(back) == j);
    CHECK(scenario_hash(back) == scenario_hash(sc));
    CHECK(scenario_hash(sc).size() == 16);
    Scenario other = sc;
    other.T = 2.0;
    CHECK(scenario_hash(other) != scenario_hash(sc));
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
}

TEST_CASE("malformed configs map to validation or structure errors")
{
    CHECK(code_of("K: 1\nn: 1\nd: 1\n") == ErrorCode::validation);
    CHECK(code_of("K: 2\nn: 1\nd: 1\nT: 1\ntypes:\n  - {A: 1}\n") == ErrorCode::structure);
    CHECK(code_of("K: 1\nn: 1\nd: 1\nT: 1\ntypes:\n  - {A: [1, 2]}\n") == ErrorCode::validation);
    CHECK(code_of("K: 1\nn: 1\nd: 1\nT: one\ntypes:\n  - {A: 1}\n") == ErrorCode::validation);
    CHECK(code_of("K: [\n") == ErrorCode::io);
    CHECK_THROWS_AS(load_scenario_file(dir() + "/missing.yaml"), Error);
}

TEST_CASE("assumption checks flag bad weights and probabilities")
{
    Scenario sc = parse_scenario(kTwoType);
    sc.pi = {0.7, 0.7};
    CHECK_FALSE(validate_scenario(sc).pass());
    sc = parse_scenario(kTwoType);
    sc.Q = MatPath::constant(-Mat::Identity(2, 2));
    CHECK_FALSE(validate_scenario(sc).pass());
    sc = parse_scenario(kTwoType);
    sc.R[1] = MatPath::constant(Mat::Constant(1, 1, 1e-10));
    CHECK_FALSE(validate_scenario(sc, 1e-8).pass());
    CHECK(validate_scenario(sc, 1e-12).pass());
}

TEST_CASE("combined terminal weight matches its expansion")
{
    Scenario sc = parse_scenario(kTwoType);
    Mat G = sc.G;
    Mat Gm = sc.Gamma;
    Mat expect = G * Gm + Gm.transpose() * G - Gm.transpose() * G * Gm;
    CHECK((combined_G(sc) - expect).norm() < 1e-15);
}

TEST_CASE("exact-proportion mixes hit the target whenever N pi is integral")
{
    for (int N : {4, 8, 64, 1000})
    {
        MixReport r = empirical_mix(N, {0.75, 0.25});
        CHECK(r.eps_N == 0.0);
        CHECK(r.counts[0] == 3 * N / 4);
        CHECK(static_cast<int>(r.assignment.size()) == N);
    }
    MixReport r = empirical_mix(7, {0.5, 0.5});
    CHECK(r.counts[0] + r.counts[1] == 7);
    CHECK(r.eps_N == doctest::Approx(1.0 / 14.0));
}

TEST_CASE("iid mixes are seeded and converge")
{
    MixReport a = empirical_mix(500, {0.3, 0.7}, MixPolicy::iid_sample, 5);
    MixReport b = empirical_mix(500, {0.3, 0.7}, MixPolicy::iid_sample, 5);
    CHECK(a.assignment == b.assignment);
    CHECK(a.eps_N < 0.1);
    CHECK_THROWS_AS(empirical_mix(0, {1.0}), Error);
}
