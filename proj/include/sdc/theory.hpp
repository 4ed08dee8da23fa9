#pragma once

// Executable checks of the division-time bounds and the closed-set error bound,
// plus the Jensen-Shannon divergence used to compare count distributions.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sdc/grid.hpp"

namespace sdc::theory {

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DivisionBounds {
  int n_min = 0;
  int n_max = 0;
};

/// max(0, ceil(log4(c_star / c_max))): fewest dichotomy divisions that can
/// bring every part down to c_max.
int min_divisions(double c_star, double c_max);

/// floor(max(log2(h / r), log2(w / r))) + 1: divisions after which every
/// sub-region is smaller than r x r, the smallest region holding c_max objects.
int max_divisions(double h, double w, double r);

/// Smallest N such that every block of the 2^N x 2^N dyadic partition of
/// `fine_counts` holds at most c_max. Grid must be square with power-of-two
/// side. Throws PreconditionError if even single cells exceed c_max.
int brute_force_min_divisions(const CountGrid& fine_counts, double c_max);

/// Smallest side s such that some s x s window of the grid holds >= c_max.
/// Throws PreconditionError if the whole grid holds less than c_max.
int min_region_side(const CountGrid& counts, double c_max);

struct Prop1Row {
  int id = 0;
  double total = 0.0;
  double c_max = 0.0;
  int region_side = 0;  // min_region_side of the fine grid
  DivisionBounds bounds;
  int oracle = 0;       // brute_force_min_divisions
  bool holds() const noexcept { return bounds.n_min <= oracle && oracle <= bounds.n_max; }
};

/// Random side x side fine-count grids with every cell in [0, c_max] and total
/// above c_max, each checked against the brute-force oracle. Instance i draws
/// from its own stream, so rows do not depend on how many are requested.
std::vector<Prop1Row> prop1_sweep(int instances, std::uint64_t seed, std::size_t side = 8);

/// Piecewise-linear tabulated map x -> E|relative error|.
class ErrorProfile {
 public:
  ErrorProfile(std::vector<double> xs, std::vector<double> fs);

  double operator()(double x) const;
  /// max of f over [0, x_hi].
  double max_on(double x_hi) const;

  std::span<const double> xs() const noexcept { return xs_; }
  std::span<const double> fs() const noexcept { return fs_; }

 private:
  std::vector<double> xs_;
  std::vector<double> fs_;
};

/// Local counts of one division: every part in [0, c_max], parts sum to total.
class SplitInstance {
 public:
  SplitInstance(std::vector<double> parts, double c_max);

  double total() const noexcept { return total_; }
  double c_max() const noexcept { return c_max_; }
  std::span<const double> parts() const noexcept { return parts_; }

 private:
  std::vector<double> parts_;
  double total_ = 0.0;
  double c_max_ = 0.0;
};

struct McReport {
  double emp_open = 0.0;     // mean of c_star |e|,      E|e|   = f(c_star)
  double emp_closed = 0.0;   // mean of |sum c_i e_i|,   E|e_i| = f(c_i)
  double bound = 0.0;        // max_{x <= c_max} f(x) * c_star
  double se_open = 0.0;      // Monte Carlo standard errors
  double se_closed = 0.0;
  std::int64_t trials = 0;
  bool closed_within_bound = false;  // emp_closed <= bound + 3 se_closed
  bool bound_below_open = false;     // bound < emp_open + 3 se_open
  bool closed_below_open = false;    // emp_closed < emp_open
  bool holds() const noexcept {
    return closed_within_bound && bound_below_open && closed_below_open;
  }
};

/// Monte Carlo check of E[closed-set error] <= max f * c_star < E[open-set error].
/// Errors are sign-symmetric with half-normal magnitude scaled so E|e| = f;
/// trials are split into fixed chunks with independent seeded streams, so
/// the result does not depend on `jobs`.
McReport mc_verify_prop2(const ErrorProfile& profile, const SplitInstance& split,
                         std::int64_t trials, std::uint64_t seed, int jobs = 1);

/// 0.5 KL(p || m) + 0.5 KL(q || m), m = (p + q) / 2, natural log.
double js_divergence(std::span<const double> p, std::span<const double> q);

/// Normalized histogram of `values` over bins [k w, (k+1) w), k = 0..n_bins-1;
/// values beyond the last edge land in the last bin.
std::vector<double> count_histogram(std::span<const double> values, double bin_width,
                                    std::size_t n_bins);

}  // namespace sdc::theory
