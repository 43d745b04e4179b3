// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Uniform time grid with a pre-history segment, path ensembles, Brownian
// increments and the exponentially discounted L2 norm.

#pragma once

#include "mfsoc/core.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfsoc
{

/// Uniform grid on [-history_len*h, T].
struct TimeGrid
{
    double T = 0;
    double h = 0;
    int steps = 0;
    int m_delta = 0;
    int m_theta = 0;
    int history_len = 0;

    double t(int i) const { return i * h; }
    double delta() const { return m_delta * h; }
    double theta() const { return m_theta * h; }
};

/// Build a grid; delays must be integer multiples of h.
TimeGrid build_grid(double T, double h, double delta, double theta);

enum class PathKind
{
    state,
    control,
    backward_y,
    backward_z,
    deterministic,
};

/// M paths of a dim-vector process on absolute indices [-history_len, steps].
class PathEnsemble
{
  public:
    PathEnsemble() = default;
    PathEnsemble(const TimeGrid& grid, int M, int dim, PathKind kind);

    int paths() const { return M_; }
    int dim() const { return dim_; }
    PathKind kind() const { return kind_; }
    const TimeGrid& grid() const { return grid_; }

    /// Pointer to the dim values of path p at absolute index i.
    double* at(int p, int i) { return data_.data() + offset(p, i); }
    const double* at(int p, int i) const { return data_.data() + offset(p, i); }

    Eigen::Map<Vec> vec(int p, int i) { return {at(p, i), dim_}; }
    Eigen::Map<const Vec> vec(int p, int i) const { return {at(p, i), dim_}; }

    /// Value at index i + lag; negative absolute times read the history.
    Vec shifted_value(int p, int i, int lag) const;

    /// Ensemble mean at index i (pairwise reduction).
    Vec mean(int i) const;

    /// Fill index i of every path with v.
    void set_all(int i, const Vec& v);

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

  private:
    std::size_t offset(int p, int i) const;

    TimeGrid grid_{};
    int M_ = 0;
    int dim_ = 0;
    PathKind kind_ = PathKind::state;
    std::vector<double> data_;
};

/// Brownian increments dW for M paths, steps increments each, scalar noise.
struct NoiseEnsemble
{
    int M = 0;
    int steps = 0;
    std::uint64_t seed = 0;
    bool antithetic = false;
    std::vector<double> dW;  // row-major M x steps

    double at(int p, int i) const { return dW[static_cast<std::size_t>(p) * steps + i]; }
};

/// Regenerate increments; each path has its own stream from (seed, path).
NoiseEnsemble make_noise(const TimeGrid& grid, int M, std::uint64_t seed,
                         bool antithetic = false, int workers = 1);

/// Per-path generator seed derived from the master seed.
std::uint64_t path_seed(std::uint64_t master, std::uint64_t path, std::uint64_t salt = 0);

enum class Window
{
    to_T_minus_delta,  // [0, T-delta]
    to_T_minus_theta,  // [0, T-theta]
    from_theta,        // [theta, T]
    to_theta,          // [0, theta]
};

/// Closed-window indicator over grid indices 0..steps.
std::vector<double> window_mask(const TimeGrid& grid, Window w);

/// (E int_0^T e^{-rho s}|v(s)|^2 ds)^{1/2} with left-endpoint quadrature.
double discounted_norm(const PathEnsemble& p, double rho);

/// Flat binary export: header (int64 M, int64 steps, int64 dim, double h)
/// followed by the row-major payload.
void write_binary(const PathEnsemble& p, std::ostream& os);
PathEnsemble read_binary(std::istream& is, const TimeGrid& grid, PathKind kind);
void write_csv(const PathEnsemble& p, std::ostream& os);

}  // namespace mfsoc
