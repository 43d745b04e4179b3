// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Discounting-method certificate for the consistency system: transcendental
// roots, the delay quantity L, discount selection and contraction modulus.

#pragma once

#include "mfsoc/scenario.hpp"

#include <array>
#include <optional>
#include <string>

namespace mfsoc
{

/// Unique root of lambda + c*exp(lambda*delta) = rhs for c, delta >= 0.
double solve_discount_root(double c, double delta, double rhs);

/// L for the given norm bundle and state delay.
double compute_L(const NormBundle& nb, double delta);

enum class CertBranch
{
    horizon_free,       // L < 0, both discounted rates positive
    horizon_dependent,  // small-T argument with rho~1 >= 1, rho~2 <= 0
};

struct Certificate
{
    NormBundle norms;
    std::array<double, 16> l{};  // l[1..15]
    double multiplier = 1;
    double lambda1 = 0;
    double lambda2 = 0;
    double rho = 0;
    double rho_t1 = 0;  // rho + lambda1
    double rho_t2 = 0;  // -rho + lambda2
    double L = 0;
    double CY = 0;
    double CZ = 0;
    double modulus = 0;
    CertBranch branch = CertBranch::horizon_free;
    bool pass = false;
    std::string dominant;  // largest single contribution to max(CY, CZ)
    std::string note;
};

struct CertifyOptions
{
    std::optional<double> rho_override;
    std::optional<std::array<double, 16>> l_weights;  // used as given, no sweep
    double T = 0;                                     // 0: take sc.T
};

Certificate certify(const Scenario& sc, const CertifyOptions& opts = {});
Certificate certify(const NormBundle& nb, double delta, double theta, double T, const CertifyOptions& opts = {});

std::string certificate_json(const Certificate& c, const std::string& scenario_hash);

}  // namespace mfsoc
