// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward Euler-Maruyama integrators: the M1 map, paths driven by a control
// field, and the variation and limit systems of a single-agent perturbation.

#pragma once

#include "mfsoc/backward.hpp"
#include "mfsoc/grid.hpp"
#include "mfsoc/scenario.hpp"

#include <cstdint>
#include <vector>

namespace mfsoc
{

/// Initial states of M paths of one type (M x n). Gaussian laws use
/// mean + L z with L the Cholesky factor of the covariance; with antithetic
/// sampling odd paths reuse the previous draw with z negated.
Mat sample_initial_states(const Scenario& sc, int type, int M, std::uint64_t seed, bool antithetic = false);

/// Initial state of population agent j of the given type.
Vec sample_agent_state(const Scenario& sc, int type, std::uint64_t seed, int agent);

/// Control history u0 on [-H, -1] and zeros on [0, steps].
PathEnsemble control_with_history(const Discretization& disc, int M);

struct ForwardResult
{
    std::vector<PathEnsemble> alpha;  // per type
    PathEnsemble xhat;                // one path: Sum_k pi_k E alpha_k
};

/// M1: alpha_k for all types jointly. v[k] holds stored controls per path,
/// uhat the delayed mean control (one path, history u0). When frozen_xhat is
/// given it replaces the ensemble mean in the coupling term.
ForwardResult m1_forward(const Discretization& disc, const std::vector<Mat>& xi, const std::vector<PathEnsemble>& v,
                         const PathEnsemble& uhat, const std::vector<NoiseEnsemble>& noise, int workers = 1,
                         const PathEnsemble* frozen_xhat = nullptr);

struct FieldPaths
{
    PathEnsemble state;
    PathEnsemble control;
};

/// Paths with frozen mean fields whose control at each step is read from the
/// type's control field. path_type[p] selects the type of path p.
FieldPaths simulate_field_paths(const Discretization& disc, const std::vector<int>& path_type, const Mat& xi,
                                const std::vector<ControlField>& field, const PathEnsemble& xhat,
                                const PathEnsemble& uhat, const NoiseEnsemble& noise, int workers = 1);

/// Features of path p at step i as the field expects them.
Vec field_features(const ControlField& field, const PathEnsemble& state, const Vec& xi, int p, int i, int m_delta);

/// Outputs of the variation and limit systems for a perturbation of agent i.
/// All are single realizations (one path) with zero history.
struct VariationBundle
{
    PathEnsemble du;                  // perturbation (control kind)
    PathEnsemble dx_i;                // perturbed agent
    std::vector<PathEnsemble> dx_j;   // a representative unperturbed agent per type
    std::vector<PathEnsemble> dx_k;   // aggregate (N_k - I_k(i)) dx_j per type
    std::vector<PathEnsemble> x_lim;  // limit systems x** per type; x* of type k equals x**_k
    PathEnsemble dx_bar;              // (dx_i + Sum_k dx_k) / N
};

/// du: one path, control kind, zero on [-H, 0) and defined on [0, steps).
/// dW: increments of agent i (steps entries) or nullptr for noise-free runs.
VariationBundle simulate_variation(const Discretization& disc, const PathEnsemble& du, int agent_type,
                                   const MixReport& mix, const double* dW);

}  // namespace mfsoc
