// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Backward solvers: regression conditional expectations, the M2 sweep over
// (beta, gamma, y-check, z-check, zeta) and the deterministic advanced ODE.

#pragma once

#include "mfsoc/grid.hpp"
#include "mfsoc/scenario.hpp"

#include <iosfwd>
#include <vector>

namespace mfsoc
{

struct CondExpOptions
{
    int degree = 1;
    double ridge = 1e-10;
};

/// Ridge least squares on a polynomial basis of standardized features.
/// Constant feature columns are dropped before the fit.
class RegressionFit
{
  public:
    int degree = 1;
    std::vector<int> kept;                 // feature columns that vary
    Vec mean;                              // per kept column
    Vec scale;                             // per kept column
    std::vector<std::vector<int>> terms;   // monomials over kept columns; {} is the constant
    Mat coef;                              // basis x targets
    double r2 = 1;
    double cond = 1;

    int basis_size() const { return static_cast<int>(terms.size()); }
    /// Basis rows for raw feature rows.
    Mat basis(const Mat& features) const;
    Vec basis_row(const Eigen::Ref<const Vec>& f) const;
    Mat predict(const Mat& features) const;
};

/// features: samples x f, targets: samples x q.
RegressionFit fit_conditional_expectation(const Mat& features, const Mat& targets,
                                          const CondExpOptions& opts = {});

/// Affine-in-basis control map for one type at one step.
struct FieldStep
{
    RegressionFit basis;  // coef is unused; only the feature transform
    Mat coef;             // basis x d
};

/// Decentralized control of one type as a function of the agent's own
/// features: (x(t_i), x(t_i - delta)) with diffusion, the initial state
/// without (everything is then a function of xi).
struct ControlField
{
    bool xi_features = false;
    std::vector<FieldStep> steps;  // 0..steps-1

    Vec eval(int i, const Eigen::Ref<const Vec>& features) const;
};

struct StepDiagnostics
{
    int step = 0;
    int type = 0;
    double r2 = 1;
    double cond = 1;
    double z_norm = 0;
};

/// Everything the backward sweep produces for the K representative types.
struct BackwardSolution
{
    std::vector<PathEnsemble> beta, ycheck, gamma, zcheck, v;  // per type
    std::vector<PathEnsemble> yhat, zeta;                      // per type, one path
    std::vector<ControlField> field;
    std::vector<StepDiagnostics> diag;
};

/// Optional frozen mean-field inputs; when set, the sweep reads them instead
/// of recomputing E y-check and zeta from the ensembles.
struct FrozenMeans
{
    const std::vector<PathEnsemble>* yhat = nullptr;
    const std::vector<PathEnsemble>* zeta = nullptr;
};

struct BackwardOptions
{
    CondExpOptions ce;
    int workers = 1;
    bool fit_field = true;
};

/// One backward Euler sweep of the consistency-condition adjoints for all
/// types. alpha[k] holds M paths of type k; xi[k] its initial states (M x n).
BackwardSolution m2_backward(const Discretization& disc, const std::vector<PathEnsemble>& alpha,
                             const PathEnsemble& xhat, const std::vector<NoiseEnsemble>& noise,
                             const std::vector<Mat>& xi, const BackwardOptions& opts = {},
                             const FrozenMeans& frozen = {});

/// Deterministic advanced ODE for zeta_k given x-hat and E y-check_k grids.
/// terminal overrides -GG x-hat(T) when non-empty (one vector per type).
std::vector<PathEnsemble> solve_deterministic_advanced(const Discretization& disc, const PathEnsemble& xhat,
                                                       const std::vector<PathEnsemble>& yhat,
                                                       const std::vector<Vec>& terminal = {});

/// Backward Euler for dy = -[A'y + Ahat'(t+delta) E_t y(t+delta) I + g] dt + z dW
/// along a given set of paths of one type with pathwise drivers g (M paths,
/// indices 0..steps-1) and terminal values (M paths at steps). With
/// use_regression false the conditional expectations are the identity.
struct AdjointResult
{
    PathEnsemble y;
    PathEnsemble z;
};

AdjointResult solve_linear_adjoint(const Discretization& disc, int type, const PathEnsemble& state,
                                   const PathEnsemble& driver, const NoiseEnsemble* noise,
                                   bool use_regression, const CondExpOptions& ce = {});

void write_diagnostics_csv(const std::vector<StepDiagnostics>& diag, std::ostream& os);

}  // namespace mfsoc
