// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Consistency-condition solver: Picard iteration of M2 after M1 on the K
// representative types, the deterministic mean system, residual checks and
// the decentralized control formula.

#pragma once

#include "mfsoc/backward.hpp"
#include "mfsoc/forward.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfsoc
{

struct PicardOptions
{
    int max_iters = 50;
    double tol = 1e-8;      // absolute, on ||dY||_rho + ||dZ||_rho
    double rel_tol = 0;     // also stop when residual <= rel_tol * first residual
    double rho = 0;
    double damping = 1.0;   // weight of the new iterate
    int M = 2000;
    std::uint64_t seed = 1;
    bool antithetic = true;
    int workers = 1;
    CondExpOptions ce;
};

struct CCSolution
{
    Discretization disc;
    PicardOptions opts;

    PathEnsemble xhat;                     // Sum pi_l E alpha_l
    PathEnsemble uhat;                     // Sum pi_l E v_l, history u0
    std::vector<PathEnsemble> yhat, zeta;  // per type, deterministic

    std::vector<Mat> xi;
    std::vector<NoiseEnsemble> noise;
    std::vector<PathEnsemble> alpha, beta, gamma, ycheck, zcheck, v;
    std::vector<ControlField> field;
    std::vector<StepDiagnostics> diag;

    std::vector<double> residuals;  // ||dY|| + ||dZ|| per iteration
    std::vector<double> residual_y, residual_z;
    int iterations = 0;
    bool converged = false;
};

/// Picard iteration did not reach the tolerance; carries the residual log.
class DivergenceError : public Error
{
  public:
    DivergenceError(std::string what, std::vector<double> history, long index = -1);
    const std::vector<double>& history() const noexcept { return history_; }

  private:
    std::vector<double> history_;
};

CCSolution picard_solve(const Discretization& disc, const PicardOptions& opts = {});

/// Deterministic mean system for D = Dhat = 0. The controls are affine in the
/// unknown mean-control grid, so the fixed point is found by one dense LU
/// solve. The control field maps an agent's initial state to its controls.
CCSolution mean_system_solve(const Discretization& disc);

/// Sum_k pi_k Btilde'(t_i + theta) (yhat_k + zeta_k)(t_i + theta), masked.
Vec theta3(const Discretization& disc, const std::vector<PathEnsemble>& yhat, const std::vector<PathEnsemble>& zeta,
           int i);

/// u = -RR_k(t_i)^{-1} (B'p + Bhat'(t_i+theta) p_adv I + D'q + Dhat'(t_i+theta) q_adv I + Theta3).
Vec decentralized_control(const Discretization& disc, int type, int i, const Vec& p_now, const Vec& p_adv,
                          const Vec& q_now, const Vec& q_adv, const Vec& th3);
Vec decentralized_control(const CCSolution& cc, int type, int i, const Vec& p_now, const Vec& p_adv,
                          const Vec& q_now, const Vec& q_adv);

struct ResidualReport
{
    double dY = 0;
    double dZ = 0;
    double total = 0;
    double mean_defect = 0;  // ||xhat - Sum pi E alpha||_0 after one more M1
};

/// One more M2 after M1 from the stored controls.
ResidualReport cc_residual(const CCSolution& cc);

/// Mean-field grids as CSV with the scenario hash in a comment header.
void write_meanfields_csv(const CCSolution& cc, const std::string& hash, std::ostream& os);
/// JSON header: hash, options, residual log.
std::string cc_header_json(const CCSolution& cc, const std::string& hash);

}  // namespace mfsoc
