// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared aliases, error type and small numeric helpers.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfsoc
{

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Error categories; the numeric values match the C API status codes.
enum class ErrorCode : int
{
    validation = 1,
    divergence = 2,
    usage = 3,
    io = 4,
    structure = 5,
    regression = 6,
    grid = 7,
    admissibility = 8,
    subclass = 9,
};

/// Exception carrying a category, the emitting module and the first bad index.
class Error : public std::runtime_error
{
  public:
    Error(ErrorCode code, std::string module, std::string what, long index = -1);

    ErrorCode code() const noexcept { return code_; }
    const std::string& module() const noexcept { return module_; }
    long index() const noexcept { return index_; }

  private:
    ErrorCode code_;
    std::string module_;
    long index_;
};

/// Deterministic pairwise (tree) sum; result does not depend on thread count.
double pairwise_sum(const double* x, std::size_t n, std::size_t stride = 1);

inline double pairwise_sum(const std::vector<double>& x)
{
    return pairwise_sum(x.data(), x.size());
}

/// Run fn(begin, end) over [0, n) split into contiguous chunks.
/// With workers <= 1 everything runs on the calling thread.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t, std::size_t)>& fn);

/// SplitMix64 finaliser, used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Largest singular value.
double spectral_norm(const Mat& m);

}  // namespace mfsoc
