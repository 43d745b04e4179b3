// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// K-type delayed LQ population: coefficients, validation, grid tabulation,
// derived coefficient products, stacked block norms and type assignment.

#pragma once

#include "mfsoc/core.hpp"
#include "mfsoc/grid.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace mfsoc
{

/// Value held on [from, until). Constants use an unbounded range.
struct Segment
{
    double from = -std::numeric_limits<double>::infinity();
    double until = std::numeric_limits<double>::infinity();
    Mat value;
    bool bounded = false;  // written with explicit from/until in the config
};

/// Piecewise-constant matrix-valued function of time; zero where no
/// segment covers t.
class MatPath
{
  public:
    MatPath() = default;
    MatPath(int rows, int cols) : rows_(rows), cols_(cols) {}

    static MatPath constant(const Mat& v);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    const std::vector<Segment>& segments() const { return segs_; }
    void add_segment(Segment s);

    /// First segment containing t wins.
    Mat at(double t) const;
    double max_norm() const;
    bool is_zero() const;
    bool has_bounded_segments() const;
    MatPath scaled(double s) const;

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<Segment> segs_;
};

enum class Sampler
{
    gaussian,
    point_mass,
};

/// Law of the initial state of one type.
struct InitialLaw
{
    Vec mean;
    Mat cov;
    Sampler sampler = Sampler::point_mass;
};

struct Scenario
{
    std::string name;
    int K = 1;
    int n = 1;
    int d = 1;
    double T = 1;
    double delta = 0;
    double theta = 0;
    double h = 0;  // default step; 0 when the config leaves it out
    std::vector<double> pi;

    // per type
    std::vector<MatPath> A, Ahat, R, Rtilde;
    std::vector<InitialLaw> xi;

    // shared
    MatPath Atilde, B, Bhat, Btilde, D, Dhat;
    MatPath Q, Qtilde, S, Stilde;
    Mat G, Gamma;

    // pre-histories: x0 (n x 1) on [-delta, 0), u0 (d x 1) on [-theta, 0)
    MatPath x0, u0;

    /// Scenario with every coefficient zero and the given shape.
    static Scenario zeros(int K, int n, int d);

    bool has_diffusion() const { return !D.is_zero() || !Dhat.is_zero(); }

    /// Multiply every coefficient matrix (dynamics and weights) by s.
    Scenario scaled_coefficients(double s) const;
};

struct Check
{
    std::string name;
    bool pass = true;
    std::string detail;
    long index = -1;
    double value = 0;
};

struct ValidationReport
{
    std::vector<Check> checks;
    bool pass() const;
    std::string summary() const;
};

/// Structural errors (dimension mismatches) throw Error(structure); failing
/// assumptions are reported.
ValidationReport validate_scenario(const Scenario& sc, double r_min = 1e-8);

/// Dimension consistency only; throws Error(structure).
void check_structure(const Scenario& sc);

/// Coefficients sampled on grid indices [-H, steps + H], H = history_len.
/// Qtilde, Stilde and Rtilde are forced to zero at indices >= steps.
struct CoeffTables
{
    TimeGrid grid;
    int lo = 0;
    int hi = 0;

    std::vector<std::vector<Mat>> A, Ahat, R, Rtilde;
    std::vector<Mat> Atilde, B, Bhat, Btilde, D, Dhat, Q, Qtilde, S, Stilde;
    std::vector<Vec> x0, u0;  // indices [-H, -1]

    const Mat& at(const std::vector<Mat>& v, int i) const { return v[static_cast<std::size_t>(i - lo)]; }
    const Vec& x_hist(int i) const { return x0[static_cast<std::size_t>(i + grid.history_len)]; }
    const Vec& u_hist(int i) const { return u0[static_cast<std::size_t>(i + grid.history_len)]; }
};

CoeffTables tabulate(const Scenario& sc, const TimeGrid& grid);

/// Derived products on grid indices 0..steps. BB[j] holds the j-th B-product
/// (1..14), DD[j] the j-th D-product (1..10); index 0 is unused.
struct TypeDerived
{
    std::vector<Mat> RR, RRinv;
    std::array<std::vector<Mat>, 15> BB;
    std::array<std::vector<Mat>, 11> DD;
};

struct DerivedCoeffs
{
    std::vector<TypeDerived> type;
    std::vector<Mat> QQ;  // Q(t) + Qtilde(t + delta)
    std::vector<Mat> SS;  // combined S weight
    Mat GG;               // G Gamma + Gamma' G - Gamma' G Gamma
};

DerivedCoeffs derived_coefficients(const Scenario& sc, const TimeGrid& grid);

/// R_k(t) + Rtilde_k(t + theta) at grid index i in [-m_theta, steps].
Mat combined_R(const CoeffTables& tb, int k, int i);
/// Q + Qtilde(t + delta) and its S-counterpart at grid index i.
Mat combined_Q(const CoeffTables& tb, int i);
Mat combined_S(const CoeffTables& tb, int i);
Mat combined_G(const Scenario& sc);

struct NormBundle
{
    double rho1_star = 0;
    double rho2_star = 0;
    double k0_prime = 0;
    std::array<double, 32> k{};  // k[0..31]
};

/// Stacked block matrices at grid index i (used for norms).
struct StackedBlocks
{
    Mat A, Ahat, Atilde1, B1, B2, B3, B4, B1pi, B2pi, B3pi, B4pi, B5pi;
    Mat B5, B6, B7, B8, D1, D2, D3, D4, D1pi, D2pi, D5, D6, D7, D8;
    Mat Acal, Acal_hat, Atilde2, Qb, Spi, Gb, Gpi;
};

StackedBlocks stacked_blocks(const Scenario& sc, const CoeffTables& tb, const DerivedCoeffs& dc, int i);

/// Sup over grid points of spectral norms; uses sc.h, or 100 steps when unset.
NormBundle block_norms(const Scenario& sc);
NormBundle block_norms(const Scenario& sc, const TimeGrid& grid);

enum class MixPolicy
{
    exact_proportion,
    iid_sample,
};

struct MixReport
{
    std::vector<double> pi_N;
    std::vector<int> counts;
    double eps_N = 0;
    std::vector<int> assignment;  // type of each agent
};

MixReport empirical_mix(int N, const std::vector<double>& pi, MixPolicy policy = MixPolicy::exact_proportion,
                        std::uint64_t seed = 0);

/// Scenario bound to a grid, with tabulated and derived coefficients.
struct Discretization
{
    Scenario sc;
    TimeGrid grid;
    CoeffTables tb;
    DerivedCoeffs dc;
};

Discretization discretize(const Scenario& sc, const TimeGrid& grid);

/// Grid from the scenario's own step (sc.h), or from h when positive,
/// or T/100 when neither is set.
TimeGrid scenario_grid(const Scenario& sc, double h = 0);

// Config I/O --------------------------------------------------------------

Scenario load_scenario_file(const std::string& path);
Scenario parse_scenario(const std::string& text);
std::string canonical_json(const Scenario& sc);
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string scenario_hash(const Scenario& sc);
std::string fnv1a_hex(const std::string& bytes);

}  // namespace mfsoc
