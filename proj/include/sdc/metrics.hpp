#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sdc/grid.hpp"

namespace sdc::metrics {

/// (1/Z) sum |pred - gt|.
double mae(std::span<const double> preds, std::span<const double> gts);
/// sqrt((1/Z) sum (pred - gt)^2). Named MSE by convention in counting.
double mse(std::span<const double> preds, std::span<const double> gts);
/// (1/Z) sum |pred - gt| / gt. Throws if any gt <= 0.
double rmae(std::span<const double> preds, std::span<const double> gts);

/// Sum over the 4^L sub-regions of |pred sub-count - gt sub-count| for one
/// image. Both maps must have dimensions divisible by 2^L.
double game(const Grid& pred_map, const Grid& gt_map, int level);

struct BinRow {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
  double mae = 0.0;
  std::optional<double> rmae;  // absent when the bin holds a zero ground truth
};

/// Groups patches by ground truth into [k w, (k + 1) w) bins and reports the
/// per-bin error. Empty bins are omitted.
std::vector<BinRow> bin_curves(std::span<const double> preds, std::span<const double> gts,
                               double bin_width);

}  // namespace sdc::metrics
