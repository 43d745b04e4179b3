// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// N-agent experiments: realized population under the decentralized strategy,
// costs, mean-field consistency errors, the social-cost variation with its
// twelve error terms, and log-log rate fits.

#pragma once

#include "mfsoc/ccfix.hpp"
#include "mfsoc/forward.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfsoc
{

struct PopulationRun
{
    int N = 0;
    std::uint64_t seed = 0;
    MixReport mix;
    Mat xi;                // N x n initial states
    NoiseEnsemble noise;   // one path per agent
    PathEnsemble aux_state;  // frozen-mean-field paths feeding the control field
    PathEnsemble state;      // realized x~_j
    PathEnsemble control;    // realized u~_j
    PathEnsemble xbar;       // x~^(N), one path
    PathEnsemble ubar;       // u~^(N), one path
    std::vector<double> cost;
    double social = 0;
};

struct RealizedPaths
{
    PathEnsemble state, xbar, ubar;
};

/// Joint N-agent dynamics with the true averages x~^(N)(t - delta) and
/// u~^(N)(t - theta) for given open-loop controls (N paths, history u0).
RealizedPaths integrate_population(const Discretization& disc, const std::vector<int>& assignment, const Mat& xi,
                                   const PathEnsemble& control, const NoiseEnsemble* noise, int workers = 1);

/// Per-agent costs by left-endpoint quadrature, including delayed terms.
std::vector<double> agent_costs(const Discretization& disc, const std::vector<int>& assignment,
                                const PathEnsemble& state, const PathEnsemble& control, const PathEnsemble& xbar);

PopulationRun simulate_realized_population(const CCSolution& cc, int N, MixPolicy policy, std::uint64_t seed,
                                           int workers = 1);

/// Sum of per-agent costs.
double social_cost(const PopulationRun& run);

struct ConsistencyMetrics
{
    double state = 0;    // sup_t |x~^(N) - xhat|^2 on this realization
    double control = 0;  // sup_t |u~^(N) - uhat|^2
};

ConsistencyMetrics consistency_error(const PopulationRun& run, const CCSolution& cc);

/// Control perturbation of one agent: deterministic values plus an optional
/// part adapted to the owner's noise, du(t_m) += gain_m * W_owner(t_m).
struct Perturbation
{
    std::vector<Vec> values;  // steps entries of size d
    int noise_owner = -1;
    std::vector<Vec> gain;    // steps entries of size d, used with noise_owner
};

/// Builds du on the grid; a noise part owned by another agent is rejected.
PathEnsemble perturbation_path(const Discretization& disc, const PopulationRun& run, int agent,
                               const Perturbation& du);

struct EpsilonReport
{
    std::array<double, 13> eps{};  // eps[1..12]
    double bracket = 0;            // main term, zero at the auxiliary optimum
    double total = 0;              // bracket + Sum eps
    double est6 = 0;               // sup_t Sum_k |x**_k - dx_(k)|^2
    double est7 = 0;               // sup_t Sum_k |N_k dx_j - x*_j|^2
    double est9 = 0;               // sup_t Sum_k |mean_j y1^j - yhat_k|^2
    ConsistencyMetrics consistency;
};

EpsilonReport epsilon_terms(const CCSolution& cc, const PopulationRun& run, int agent, const Perturbation& du);

struct DerivativeReport
{
    double derivative = 0;  // variation formula
    double fd = 0;          // central difference of the social cost
    double step = 0;
    EpsilonReport eps;
};

DerivativeReport directional_derivative(const CCSolution& cc, const PopulationRun& run, int agent,
                                        const Perturbation& du, double s = 1e-3);

/// Social cost with agent's control replaced by u~ + s du; others unchanged.
double perturbed_social_cost(const CCSolution& cc, const PopulationRun& run, int agent, const PathEnsemble& du,
                             double s);

struct RateFit
{
    double slope = 0;
    double intercept = 0;
    double band = 0;  // jackknife standard error of the slope
    std::vector<double> jackknife;
};

/// Least squares of log(metric) on log(N).
RateFit rate_fit(const std::vector<double>& N, const std::vector<double>& metric);

void write_population_csv(const PopulationRun& run, const ConsistencyMetrics& cm, const std::string& hash,
                          std::ostream& os);

}  // namespace mfsoc
