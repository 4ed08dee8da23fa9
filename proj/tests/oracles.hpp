#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sdc/grid.hpp"
#include "sdc/groundtruth.hpp"
#include "sdc/losses.hpp"

namespace sdc::testing {

struct LossInstance {
  loss::HeadOutputs heads;
  std::vector<CountGrid> gt;
  loss::CounterSpec spec;
};

/// Visits every raw head output in a fixed order.
inline void for_each_raw(loss::HeadOutputs& heads, const std::function<void(double&)>& fn) {
  for (auto& h : heads) {
    for (double& v : h.counts.values()) fn(v);
    for (double& v : h.class_logits.values) fn(v);
    for (double& v : h.mask_logits.values()) fn(v);
    for (double& v : h.up_logits.values()) fn(v);
  }
}

inline std::vector<double> flatten(const loss::HeadOutputs& heads) {
  std::vector<double> out;
  auto copy = heads;
  for_each_raw(copy, [&](double& v) { out.push_back(v); });
  return out;
}

/// Random instance with finest grid at most 4x4: stage-0 side 1 or 2, up to
/// two divisions, block-consistent ground truth with some flagged parents and
/// some empty blocks. Raw counts keep clear of the clamp edges.
inline LossInstance random_loss_instance(std::mt19937_64& rng, loss::Mode mode) {
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LossInstance inst;
  const std::size_t side0 = coin(rng) ? 1 : 2;
  const int n = side0 == 1 ? static_cast<int>(rng() % 3) : static_cast<int>(rng() % 2);
  inst.spec.mode = mode;
  inst.spec.c_max = 10.0;
  if (mode == loss::Mode::Classification) {
    inst.spec.partition = gt::build_partition(
        inst.spec.c_max, coin(rng) ? gt::PartitionScheme::OneLinear : gt::PartitionScheme::TwoLinear);
  }

  // Finest level first, then block sums up to stage 0.
  const std::size_t fine = side0 << n;
  Grid g(fine, fine);
  for (double& v : g.values()) v = unit(rng) < 0.15 ? 0.0 : 9.0 * unit(rng);
  if (fine >= 2 && coin(rng)) {
    g(0, 0) = g(0, 1) = g(1, 0) = g(1, 1) = 0.0;
  }
  std::vector<Grid> levels{g};
  for (int i = 0; i < n; ++i) levels.push_back(block_sum2(levels.back()));
  std::reverse(levels.begin(), levels.end());
  for (auto& lv : levels) inst.gt.emplace_back(lv);

  for (int i = 0; i <= n; ++i) {
    const std::size_t s = side0 << i;
    loss::StageHeads h;
    if (mode == loss::Mode::Regression) {
      h.counts = Grid(s, s);
      for (double& v : h.counts.values()) {
        do {
          v = -2.0 + 14.0 * unit(rng);
        } while (std::abs(v) < 1e-3 || std::abs(v - inst.spec.c_max) < 1e-3);
      }
    } else {
      h.class_logits = loss::ClassScores(s, s, inst.spec.classes());
      for (double& v : h.class_logits.values) v = -2.0 + 4.0 * unit(rng);
    }
    if (i > 0) {
      h.mask_logits = Grid(s, s);
      h.up_logits = Grid(s, s);
      for (double& v : h.mask_logits.values()) v = -3.0 + 6.0 * unit(rng);
      for (double& v : h.up_logits.values()) v = -2.0 + 4.0 * unit(rng);
    }
    inst.heads.push_back(std::move(h));
  }
  return inst;
}

struct FdReport {
  std::size_t coordinates = 0;  // all raw outputs
  std::size_t checked = 0;      // those with |analytic| > threshold
  double max_rel = 0.0;
  bool smooth = true;           // no l1 term sat within reach of its kink
};

/// Central differences of the total loss, accumulated term by term so that
/// summands untouched by a coordinate cancel exactly.
inline FdReport fd_check(const LossInstance& inst, double h = 1e-6, double threshold = 1e-8) {
  FdReport rep;
  const auto grad = loss::gradients(inst.heads, inst.gt, inst.spec);
  const auto analytic = flatten(grad.grad);
  const auto base = loss::forward(inst.heads, inst.gt, inst.spec);
  for (double t : base.terms) {
    if (t > 0.0 && t < 1e-6) rep.smooth = false;
  }
  rep.coordinates = analytic.size();
  for (std::size_t j = 0; j < analytic.size(); ++j) {
    auto plus = inst.heads;
    auto minus = inst.heads;
    std::size_t idx = 0;
    for_each_raw(plus, [&](double& v) { if (idx++ == j) v += h; });
    idx = 0;
    for_each_raw(minus, [&](double& v) { if (idx++ == j) v -= h; });
    const auto fp = loss::forward(plus, inst.gt, inst.spec).terms;
    const auto fm = loss::forward(minus, inst.gt, inst.spec).terms;
    double fd = 0.0;
    for (std::size_t t = 0; t < fp.size(); ++t) fd += (fp[t] - fm[t]) / (2.0 * h);
    if (std::abs(analytic[j]) > threshold) {
      ++rep.checked;
      const double rel = std::abs(analytic[j] - fd) / std::max(std::abs(analytic[j]), std::abs(fd));
      rep.max_rel = std::max(rep.max_rel, rel);
    }
  }
  return rep;
}

}  // namespace sdc::testing
