#pragma once

// Supervision terms for an N-stage S-DC counter and their analytic gradients
// with respect to raw head outputs (counts or class logits, division-mask
// logits, upsampling logits).
//
// Reductions: every per-grid term is averaged over the cells of its grid and
// summed over stages. The division and consistency terms average over all
// parent cells, unflagged cells contributing 0.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sdc/grid.hpp"
#include "sdc/groundtruth.hpp"

namespace sdc::loss {

enum class Mode { Regression, Classification };

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A head output, intermediate or gradient that is NaN or infinite.
class NonFiniteError : public LossError {
 public:
  using LossError::LossError;
};

/// Per-cell class scores, stored cell-major: value(r, c, k) at (r * width + c) * classes + k.
struct ClassScores {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<double> values;

  ClassScores() = default;
  ClassScores(std::size_t h, std::size_t w, std::size_t k, double fill = 0.0)
      : height(h), width(w), classes(k), values(h * w * k, fill) {}

  std::size_t cells() const noexcept { return height * width; }
  std::span<const double> cell(std::size_t i) const {
    return std::span<const double>(values).subspan(i * classes, classes);
  }
  std::span<double> cell(std::size_t i) { return std::span<double>(values).subspan(i * classes, classes); }
};

// Individual terms.

/// Mean |min(pred, c_max) - min(gt, c_max)|.
double l_counter_reg(const Grid& pred, const CountGrid& gt, double c_max);
/// Mean cross-entropy of per-cell softmax against integer labels.
double l_counter_cls(const ClassScores& logits, std::span<const std::size_t> labels);
/// Mean |DIV_N - C_N^gt|.
double l_merge(const CountGrid& div_n, const CountGrid& gt_n);
/// masks = W_1..W_N, gt_counts = C_0^gt..C_{N-1}^gt (at least N entries).
double l_div(std::span<const DivisionMask> masks, std::span<const CountGrid> gt_counts, double c_max);
/// Sum over stages of mean |U_i - U_i^gt|.
double l_up(std::span<const UpsamplingMap> u, std::span<const UpsamplingMap> u_gt);
/// counts = C_0..C_N, gt_counts = C_0^gt..C_{N-1}^gt. Regression only.
double l_eq(std::span<const CountGrid> counts, std::span<const CountGrid> gt_counts, double c_max,
            Mode mode = Mode::Regression);

struct LossParts {
  std::optional<double> counter;
  std::optional<double> merge;
  std::optional<double> up;
  std::optional<double> div;
  std::optional<double> eq;
};

struct LossBreakdown {
  double l_counter = 0.0;
  double l_merge = 0.0;
  double l_up = 0.0;
  double l_div = 0.0;
  std::optional<double> l_eq;  // absent in classification mode
  double total = 0.0;
};

/// Unweighted sum: counter + merge + up + div (+ eq in regression mode).
/// Throws LossError if a component required by the mode is missing.
LossBreakdown total_loss(Mode mode, const LossParts& parts);

// Whole-model evaluation over raw head outputs.

struct CounterSpec {
  Mode mode = Mode::Regression;
  double c_max = 1.0;
  /// Required in classification mode.
  std::optional<gt::IntervalPartition> partition;

  std::size_t classes() const { return partition ? partition->class_count() : 0; }
};

/// Raw outputs of the three heads at one stage. Stage 0 has no mask or
/// upsampling logits. `counts` is used in regression mode, `class_logits` in
/// classification mode.
struct StageHeads {
  Grid counts;
  ClassScores class_logits;
  Grid mask_logits;
  Grid up_logits;
};

using HeadOutputs = std::vector<StageHeads>;

/// Counts that enter the merge: clamp(raw, 0, c_max) for regression,
/// softmax-expected class value for classification.
Grid stage_counts(const StageHeads& heads, const CounterSpec& spec);

struct ForwardPass {
  LossBreakdown loss;
  std::vector<Grid> counts;          // C_0..C_N as used by the merge
  std::vector<Grid> divs;            // DIV_0..DIV_N
  std::vector<Grid> masks;           // W_i, index 0 unused
  std::vector<Grid> upmaps;          // U_i, index 0 unused
  std::vector<double> terms;         // every summand of the total, fixed order
};

struct Gradients {
  LossBreakdown loss;
  HeadOutputs grad;  // same layout as the inputs
};

/// Forward pass of the full loss. gt_counts holds C_0^gt..C_N^gt.
ForwardPass forward(const HeadOutputs& heads, std::span<const CountGrid> gt_counts,
                    const CounterSpec& spec);

/// d total / d (every raw head output). l1 subgradient at 0 is 0; the block
/// max in the division loss routes to the first maximal cell.
Gradients gradients(const HeadOutputs& heads, std::span<const CountGrid> gt_counts,
                    const CounterSpec& spec);

}  // namespace sdc::loss
