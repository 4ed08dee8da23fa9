#include "sdc/metrics.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace sdc::metrics {

namespace {

void check_pairs(std::span<const double> preds, std::span<const double> gts) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("prediction and ground-truth lengths differ");
  }
  if (preds.empty()) {
    throw std::invalid_argument("metric over an empty set");
  }
}

}  // namespace

double mae(std::span<const double> preds, std::span<const double> gts) {
  check_pairs(preds, gts);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - gts[i]);
  return s / static_cast<double>(preds.size());
}

double mse(std::span<const double> preds, std::span<const double> gts) {
  check_pairs(preds, gts);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - gts[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(preds.size()));
}

double rmae(std::span<const double> preds, std::span<const double> gts) {
  check_pairs(preds, gts);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!(gts[i] > 0.0)) {
      throw std::invalid_argument("rMAE undefined for non-positive ground truth");
    }
    s += std::abs(preds[i] - gts[i]) / gts[i];
  }
  return s / static_cast<double>(preds.size());
}

double game(const Grid& pred_map, const Grid& gt_map, int level) {
  require_same_shape(pred_map, gt_map, "game");
  if (level < 0 || level > 30) {
    throw std::invalid_argument("GAME level out of range");
  }
  const std::size_t cells = std::size_t{1} << level;
  if (pred_map.height() % cells != 0 || pred_map.width() % cells != 0) {
    throw GridError("game: " + shape_string(pred_map) + " not divisible into " +
                    std::to_string(cells) + "x" + std::to_string(cells) + " regions");
  }
  const std::size_t rh = pred_map.height() / cells;
  const std::size_t rw = pred_map.width() / cells;
  // Region totals are accumulated separately and in row-major order, so
  // level 0 reproduces |pred.sum() - gt.sum()| bit for bit.
  std::vector<double> pred_sum(cells * cells, 0.0);
  std::vector<double> gt_sum(cells * cells, 0.0);
  for (std::size_t r = 0; r < pred_map.height(); ++r) {
    for (std::size_t c = 0; c < pred_map.width(); ++c) {
      const std::size_t region = (r / rh) * cells + c / rw;
      pred_sum[region] += pred_map(r, c);
      gt_sum[region] += gt_map(r, c);
    }
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred_sum.size(); ++i) s += std::abs(pred_sum[i] - gt_sum[i]);
  return s;
}

std::vector<BinRow> bin_curves(std::span<const double> preds, std::span<const double> gts,
                               double bin_width) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("prediction and ground-truth lengths differ");
  }
  if (!(bin_width > 0.0)) {
    throw std::invalid_argument("bin width must be positive");
  }
  struct Acc {
    std::size_t n = 0;
    double abs_sum = 0.0;
    double rel_sum = 0.0;
    bool has_zero = false;
  };
  std::map<long long, Acc> bins;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto k = static_cast<long long>(std::floor(gts[i] / bin_width));
    auto& acc = bins[k];
    const double e = std::abs(preds[i] - gts[i]);
    ++acc.n;
    acc.abs_sum += e;
    if (gts[i] > 0.0) {
      acc.rel_sum += e / gts[i];
    } else {
      acc.has_zero = true;
    }
  }
  std::vector<BinRow> rows;
  rows.reserve(bins.size());
  for (const auto& [k, acc] : bins) {
    BinRow row;
    row.lo = static_cast<double>(k) * bin_width;
    row.hi = static_cast<double>(k + 1) * bin_width;
    row.n = acc.n;
    row.mae = acc.abs_sum / static_cast<double>(acc.n);
    if (!acc.has_zero) row.rmae = acc.rel_sum / static_cast<double>(acc.n);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sdc::metrics
