// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/wellposedness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfsoc
{

double solve_discount_root(double c, double delta, double rhs)
{
    if (c < 0 || delta < 0)
        throw Error(ErrorCode::usage, "wellposedness", "root equation needs c >= 0 and delta >= 0");
    if (c == 0)
        return rhs;
    if (delta == 0)
        return rhs - c;
    // g is strictly increasing with g(rhs) >= rhs and g(rhs - c - 1) < rhs when
    // the exponential is below one there; widen until bracketed.
    auto g = [&](double x) { return x + c * std::exp(x * delta); };
    double hi = rhs;
    double lo = std::min(rhs - c, rhs) - 1.0;
    while (g(lo) > rhs)
        lo = rhs - 2.0 * (rhs - lo);
    // Newton safeguarded by the bracket.
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it)
    {
        double f = g(x) - rhs;
        if (f > 0)
            hi = x;
        else
            lo = x;
        double df = 1.0 + c * delta * std::exp(x * delta);
        double xn = x - f / df;
        if (!(xn > lo && xn < hi))
            xn = 0.5 * (lo + hi);
        if (std::abs(xn - x) <= 1e-16 * std::max(1.0, std::abs(x)) || hi - lo <= 1e-16 * std::max(1.0, std::abs(x)))
        {
            x = xn;
            break;
        }
        x = xn;
    }
    return x;
}

double compute_L(const NormBundle& nb, double delta)
{
    const auto& k = nb.k;
    double r1 = nb.rho1_star;
    double r2 = nb.rho2_star;
    double a = k[1] + k[2];
    double b = k[18] + k[19];
    return 2.0 * (r1 + r2) + a + b + a * std::exp(-(2.0 * r1 + a) * delta) + b * std::exp(-(2.0 * r2 + b) * delta);
}

namespace
{

struct Terms
{
    double CY = 0;
    double CZ = 0;
    std::string dominant;
};

Terms contraction_terms(const NormBundle& nb, const std::array<double, 16>& l, double lambda1, double theta)
{
    const auto& k = nb.k;
    double em = std::exp(lambda1 * theta);   // exp(-(rho - rho~1) theta)
    double ep = std::exp(-lambda1 * theta);  // exp((rho - rho~1) theta)
    struct Item
    {
        const char* name;
        double value;
        bool y;
    };
    const Item items[] = {
        {"k3*l1", k[3] * l[1], true},
        {"k5*l3", k[5] * l[3], true},
        {"k9*l7", k[9] * l[7], true},
        {"k20^2", k[20] * k[20], true},
        {"k23^2", k[23] * k[23], true},
        {"k25^2", k[25] * k[25], true},
        {"k4*l2", k[4] * l[2] * em, true},
        {"k6*l4", k[6] * l[4] * em, true},
        {"k21^2", k[21] * k[21] * em, true},
        {"k7*l5", k[7] * l[5] * ep, true},
        {"k8*l6", k[8] * l[6] * ep, true},
        {"k22^2", k[22] * k[22] * ep, true},
        {"k24^2", k[24] * k[24] * ep, true},
        {"k10*l8", k[10] * l[8], false},
        {"k12*l10", k[12] * l[10], false},
        {"k15*l13", k[15] * l[13], false},
        {"k26^2", k[26] * k[26], false},
        {"k29^2", k[29] * k[29], false},
        {"k11*l9", k[11] * l[9] * em, false},
        {"k13*l11", k[13] * l[11] * em, false},
        {"k27^2", k[27] * k[27] * em, false},
        {"k14*l12", k[14] * l[12] * ep, false},
        {"k28^2", k[28] * k[28] * ep, false},
    };
    Terms t;
    for (const auto& it : items)
        (it.y ? t.CY : t.CZ) += it.value;
    bool y_side = t.CY >= t.CZ;
    double best = -1;
    for (const auto& it : items)
        if (it.y == y_side && it.value > best)
        {
            best = it.value;
            t.dominant = it.name;
        }
    if (best <= 0)
        t.dominant = "none";
    return t;
}

void evaluate(Certificate& c, double delta, double theta, double T, std::optional<double> rho_override)
{
    const auto& k = c.norms.k;
    double s1 = 0;
    for (int j = 1; j <= 13; ++j)
        s1 += k[j + 2] / c.l[j];
    double rhs1 = -2.0 * c.norms.rho1_star - k[1] - k[2] - s1;
    double rhs2 = -2.0 * c.norms.rho2_star - k[16] / c.l[14] - k[17] / c.l[15] - k[18] - k[19];
    c.lambda1 = solve_discount_root(k[1] + k[2], delta, rhs1);
    c.lambda2 = solve_discount_root(k[18] + k[19], delta, rhs2);

    if (c.branch == CertBranch::horizon_free)
        c.rho = rho_override ? *rho_override : -c.lambda1 + 0.5 * (c.lambda1 + c.lambda2);
    else
        c.rho = rho_override ? *rho_override : std::max(1.0 - c.lambda1, c.lambda2);
    c.rho_t1 = c.rho + c.lambda1;
    c.rho_t2 = -c.rho + c.lambda2;

    Terms t = contraction_terms(c.norms, c.l, c.lambda1, theta);
    c.CY = t.CY;
    c.CZ = t.CZ;
    c.dominant = t.dominant;
    double cmax = std::max(c.CY, c.CZ);
    double g2 = k[30] * k[30] + k[31] * k[31];
    double ql = k[16] * c.l[14] + k[17] * c.l[15];
    const double r1 = c.rho_t1;
    const double r2 = c.rho_t2;

    if (c.branch == CertBranch::horizon_free)
    {
        if (!(r1 > 0) || !(r2 > 0))
        {
            c.modulus = std::numeric_limits<double>::infinity();
            return;
        }
        c.modulus = (1.0 + r2) / r2 * (g2 + ql * std::exp(r1 * theta) / r1) * cmax;
        return;
    }
    double e2 = std::exp(-r2 * T);
    double e1 = std::exp(-r1 * T);
    double f2 = (r2 == 0 ? T : (1.0 - e2) / r2) + std::max(1.0, e2) / std::min(1.0, e2);
    double f1x = r1 == 0 ? (theta + T) : (std::exp(r1 * theta) - e1) / r1;
    c.modulus = f2 * (g2 * std::max(1.0, e1) + ql * f1x) * cmax;
}

std::array<double, 16> seed_weights(const NormBundle& nb, double mult)
{
    std::array<double, 16> l{};
    for (int j = 1; j <= 15; ++j)
    {
        double kk = nb.k[j + 2];
        l[j] = (kk > 0 ? kk : 1.0) * mult;
    }
    return l;
}

}  // namespace

Certificate certify(const NormBundle& nb, double delta, double theta, double T, const CertifyOptions& opts)
{
    Certificate base;
    base.norms = nb;
    base.L = compute_L(nb, delta);
    base.branch = base.L < 0 ? CertBranch::horizon_free : CertBranch::horizon_dependent;

    auto admissible = [&](const Certificate& c) {
        if (c.branch == CertBranch::horizon_free)
            return c.rho_t1 > 0 && c.rho_t2 > 0 && std::isfinite(c.modulus);
        return c.rho_t1 >= 1.0 - 1e-12 && c.rho_t2 <= 1e-12 && std::isfinite(c.modulus);
    };

    if (opts.l_weights)
    {
        Certificate c = base;
        c.l = *opts.l_weights;
        c.multiplier = 1;
        evaluate(c, delta, theta, T, opts.rho_override);
        c.pass = admissible(c) && c.modulus < 1.0;
        if (!admissible(c))
            c.note = "discount rates not admissible for the selected branch";
        return c;
    }

    Certificate best;
    bool have = false;
    for (double mult : {1.0, 10.0, 1e2, 1e3, 1e4})
    {
        Certificate c = base;
        c.l = seed_weights(nb, mult);
        c.multiplier = mult;
        evaluate(c, delta, theta, T, opts.rho_override);
        if (!admissible(c))
            continue;
        if (c.modulus < 1.0)
        {
            c.pass = true;
            return c;
        }
        if (!have || c.modulus < best.modulus)
        {
            best = c;
            have = true;
        }
    }
    if (have)
    {
        best.pass = false;
        best.note = "modulus >= 1 for every weight multiplier; dominant term " + best.dominant;
        return best;
    }
    Certificate c = base;
    c.l = seed_weights(nb, 1e4);
    c.multiplier = 1e4;
    evaluate(c, delta, theta, T, opts.rho_override);
    c.pass = false;
    c.note = "no weight multiplier gives admissible discount rates (need -lambda1 < lambda2)";
    return c;
}

Certificate certify(const Scenario& sc, const CertifyOptions& opts)
{
    NormBundle nb = block_norms(sc);
    return certify(nb, sc.delta, sc.theta, opts.T > 0 ? opts.T : sc.T, opts);
}

std::string certificate_json(const Certificate& c, const std::string& scenario_hash)
{
    using nlohmann::json;
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    json j;
    j["scenario_hash"] = scenario_hash;
    j["pass"] = c.pass;
    j["branch"] = c.branch == CertBranch::horizon_free ? "horizon_free" : "horizon_dependent";
    j["L"] = num(c.L);
    j["lambda1"] = num(c.lambda1);
    j["lambda2"] = num(c.lambda2);
    j["rho"] = num(c.rho);
    j["rho_tilde1"] = num(c.rho_t1);
    j["rho_tilde2"] = num(c.rho_t2);
    j["CY"] = num(c.CY);
    j["CZ"] = num(c.CZ);
    j["modulus"] = num(c.modulus);
    j["dominant"] = c.dominant;
    j["weight_multiplier"] = c.multiplier;
    j["note"] = c.note;
    j["rho1_star"] = num(c.norms.rho1_star);
    j["rho2_star"] = num(c.norms.rho2_star);
    j["k0_prime"] = num(c.norms.k0_prime);
    json k = json::array();
    for (double v : c.norms.k)
        k.push_back(num(v));
    j["k"] = k;
    json l = json::array();
    for (int i = 1; i <= 15; ++i)
        l.push_back(num(c.l[i]));
    j["l"] = l;
    return j.dump(2);
}

}  // namespace mfsoc
