// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference solvers for degenerate subclasses: the no-delay Riccati LQ
// problem and the deterministic centralized problem as a quadratic program.

#pragma once

#include "mfsoc/ccfix.hpp"
#include "mfsoc/grid.hpp"
#include "mfsoc/scenario.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfsoc
{

struct RiccatiSolution
{
    double T = 0;
    double h = 0;
    int steps = 0;
    std::vector<Mat> P;     // grid indices 0..steps
    std::vector<Mat> gain;  // R^{-1} B' P
    std::vector<Vec> x;     // closed-loop state at grid points
    std::vector<Vec> u;     // -gain x
    double value = 0;       // x0' P(0) x0 / 2
};

/// Backward RK4 for -P' = A'P + PA - PBR^{-1}B'P + Q, P(T) = G, with
/// `substeps` RK4 steps per grid interval; the closed loop uses the same
/// fine step.
RiccatiSolution riccati_lq(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& G, double T,
                           double h, const Vec& x0, int substeps = 8);

/// Right-hand side of the Riccati ODE, -(A'P + PA - PBR^{-1}B'P + Q).
Mat riccati_rhs(const Mat& A, const Mat& B, const Mat& Q, const Mat& Rinv, const Mat& P);

struct QPSolution
{
    PathEnsemble control;  // N paths, history u0
    PathEnsemble state;    // N paths
    double objective = 0;
    double kkt = 0;        // |gradient| / max(1, |gradient at zero|)
    int iterations = 0;
    bool converged = false;
};

/// Centralized discrete problem for N agents with deterministic dynamics:
/// controls -> states through the same Euler recursion as the simulator, cost
/// summed over agents, minimized by conjugate gradients. xi holds the agents'
/// initial states (N x n); an empty matrix uses the type means.
QPSolution deterministic_qp(const Discretization& disc, const std::vector<int>& assignment, const Mat& xi = {},
                            double tol = 1e-8, int max_iters = 0);

/// Social objective of the discrete centralized problem.
double qp_objective(const Discretization& disc, const std::vector<int>& assignment, const Mat& xi,
                    const PathEnsemble& control);

/// Gradient of qp_objective with respect to the controls on [0, steps).
PathEnsemble qp_gradient(const Discretization& disc, const std::vector<int>& assignment, const Mat& xi,
                         const PathEnsemble& control);

//---------------------------------------------------------------------------//
// Comparisons against a consistency-condition solution

struct RiccatiComparison
{
    RiccatiSolution riccati;
    std::vector<Vec> u_cc;      // uhat on the grid
    std::vector<Vec> x_cc;      // xhat on the grid
    double rel_l2 = 0;          // |u_cc - u_riccati| / |u_riccati| in L2(0,T)
    Mat gain0;                  // -d v(t_0) / d xi from the control field
};

/// Requires K = 1, no delays, no mean-field coupling and no diffusion.
RiccatiComparison compare_riccati(const CCSolution& cc, int substeps = 8);

struct QPGap
{
    int N = 0;
    std::uint64_t seed = 0;
    double decentralized = 0;  // social cost of the decentralized strategy
    double optimum = 0;        // centralized QP optimum on the same draw
    double gap = 0;            // (decentralized - optimum) / N
    double kkt = 0;
    int iterations = 0;
};

/// One population draw of size N: decentralized social cost versus the
/// centralized optimum conditioned on the same initial states.
QPGap qp_gap(const CCSolution& cc, int N, std::uint64_t seed, int workers = 1);

void write_riccati_csv(const RiccatiComparison& rc, const std::string& hash, std::ostream& os);
void write_qp_gap_csv(const std::vector<QPGap>& rows, const std::string& hash, std::ostream& os);

}  // namespace mfsoc
