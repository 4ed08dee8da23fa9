#include "sdc/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace sdc::loss {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Softmax of one cell's logits into `p`, returns log-sum-exp.
double softmax(std::span<const double> logits, std::span<double> p) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return m + std::log(z);
}

/// Index offsets of the 2x2 block under parent (r, c) in a child grid of width w.
std::array<std::size_t, 4> block_cells(std::size_t r, std::size_t c, std::size_t w) {
  const std::size_t top = 2 * r * w + 2 * c;
  return {top, top + 1, top + w, top + w + 1};
}

std::size_t first_argmax(const Grid& g, const std::array<std::size_t, 4>& cells) {
  std::size_t best = cells[0];
  for (std::size_t t = 1; t < 4; ++t) {
    if (g[cells[t]] > g[best]) best = cells[t];
  }
  return best;
}

void require_child_of(const Grid& child, const Grid& parent, const char* what) {
  if (child.height() != 2 * parent.height() || child.width() != 2 * parent.width()) {
    throw LossError(std::string(what) + ": expected twice the parent resolution " +
                    shape_string(parent) + ", got " + shape_string(child));
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NonFiniteError(std::string("non-finite intermediate in ") + what);
  }
}

std::vector<std::size_t> class_labels(const CountGrid& gt, const gt::IntervalPartition& p) {
  std::vector<std::size_t> labels(gt.grid().size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = gt::count_to_class(gt.grid()[i], p);
  }
  return labels;
}

void validate(const HeadOutputs& heads, std::span<const CountGrid> gt_counts,
              const CounterSpec& spec) {
  if (heads.empty()) {
    throw LossError("no stage outputs");
  }
  if (gt_counts.size() < heads.size()) {
    throw LossError("ground truth needed for every stage");
  }
  if (!(spec.c_max > 0.0)) {
    throw LossError("c_max must be positive");
  }
  if (spec.mode == Mode::Classification && !spec.partition) {
    throw LossError("classification mode needs an interval partition");
  }
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const Grid& gt = gt_counts[i].grid();
    const auto& h = heads[i];
    if (spec.mode == Mode::Regression) {
      require_same_shape(h.counts, gt, "stage counts");
    } else if (h.class_logits.height != gt.height() || h.class_logits.width != gt.width() ||
               h.class_logits.classes != spec.classes() ||
               h.class_logits.values.size() != h.class_logits.cells() * h.class_logits.classes) {
      throw LossError("class logits do not match ground truth grid or class count");
    }
    if (i > 0) {
      require_child_of(gt, gt_counts[i - 1].grid(), "ground truth pyramid");
      require_same_shape(h.mask_logits, gt, "mask logits");
      require_same_shape(h.up_logits, gt, "upsampling logits");
    }
  }
}

}  // namespace

double l_counter_reg(const Grid& pred, const CountGrid& gt, double c_max) {
  require_same_shape(pred, gt.grid(), "l_counter_reg");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s += std::abs(std::min(pred[i], c_max) - std::min(gt.grid()[i], c_max));
  }
  return s / static_cast<double>(pred.size());
}

double l_counter_cls(const ClassScores& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.cells() || logits.cells() == 0) {
    throw LossError("l_counter_cls: label count does not match cells");
  }
  std::vector<double> p(logits.classes);
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= logits.classes) {
      throw LossError("l_counter_cls: invalid label " + std::to_string(labels[i]));
    }
    const auto cell = logits.cell(i);
    for (double v : cell) require_finite(v, "class logits");
    s += softmax(cell, p) - cell[labels[i]];
  }
  return s / static_cast<double>(labels.size());
}

double l_merge(const CountGrid& div_n, const CountGrid& gt_n) {
  require_same_shape(div_n.grid(), gt_n.grid(), "l_merge");
  double s = 0.0;
  for (std::size_t i = 0; i < div_n.grid().size(); ++i) {
    s += std::abs(div_n.grid()[i] - gt_n.grid()[i]);
  }
  return s / static_cast<double>(div_n.grid().size());
}

double l_div(std::span<const DivisionMask> masks, std::span<const CountGrid> gt_counts,
             double c_max) {
  if (gt_counts.size() < masks.size()) {
    throw LossError("l_div: need C_{i-1}^gt for every mask");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const Grid& w = masks[i].grid();
    const Grid& gt = gt_counts[i].grid();
    require_child_of(w, gt, "l_div");
    double s = 0.0;
    for (std::size_t r = 0; r < gt.height(); ++r) {
      for (std::size_t c = 0; c < gt.width(); ++c) {
        if (!(gt(r, c) > c_max)) continue;
        const auto cells = block_cells(r, c, w.width());
        s -= std::log(w[first_argmax(w, cells)]);
      }
    }
    total += s / static_cast<double>(gt.size());
  }
  return total;
}

double l_up(std::span<const UpsamplingMap> u, std::span<const UpsamplingMap> u_gt) {
  if (u.size() != u_gt.size()) {
    throw LossError("l_up: stage count mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    require_same_shape(u[i].grid(), u_gt[i].grid(), "l_up");
    double s = 0.0;
    for (std::size_t k = 0; k < u[i].grid().size(); ++k) {
      s += std::abs(u[i].grid()[k] - u_gt[i].grid()[k]);
    }
    total += s / static_cast<double>(u[i].grid().size());
  }
  return total;
}

double l_eq(std::span<const CountGrid> counts, std::span<const CountGrid> gt_counts, double c_max,
            Mode mode) {
  if (mode != Mode::Regression) {
    throw LossError("division consistency loss is undefined in classification mode");
  }
  if (counts.empty() || gt_counts.size() + 1 < counts.size()) {
    throw LossError("l_eq: need C_{i-1}^gt for every stage");
  }
  double total = 0.0;
  for (std::size_t i = 1; i < counts.size(); ++i) {
    const Grid& parent = counts[i - 1].grid();
    const Grid& child = counts[i].grid();
    const Grid& gt = gt_counts[i - 1].grid();
    require_child_of(child, parent, "l_eq");
    require_same_shape(parent, gt, "l_eq ground truth");
    const Grid sums = block_sum2(child);
    double s = 0.0;
    for (std::size_t k = 0; k < parent.size(); ++k) {
      if (gt[k] <= c_max) s += std::abs(parent[k] - sums[k]);
    }
    total += s / static_cast<double>(parent.size());
  }
  return total;
}

LossBreakdown total_loss(Mode mode, const LossParts& parts) {
  auto need = [](const std::optional<double>& v, const char* name) {
    if (!v) throw LossError(std::string("missing loss component: ") + name);
    return *v;
  };
  LossBreakdown b;
  b.l_counter = need(parts.counter, "counter");
  b.l_merge = need(parts.merge, "merge");
  b.l_up = need(parts.up, "up");
  b.l_div = need(parts.div, "div");
  b.total = b.l_counter + b.l_merge + b.l_up + b.l_div;
  if (mode == Mode::Regression) {
    b.l_eq = need(parts.eq, "eq");
    b.total += *b.l_eq;
  }
  return b;
}

Grid stage_counts(const StageHeads& heads, const CounterSpec& spec) {
  if (spec.mode == Mode::Regression) {
    Grid out = heads.counts;
    for (double& v : out.values()) {
      require_finite(v, "counter output");
      v = std::clamp(v, 0.0, spec.c_max);
    }
    return out;
  }
  const auto& logits = heads.class_logits;
  const auto values = gt::class_values(*spec.partition);
  Grid out(logits.height, logits.width);
  std::vector<double> p(logits.classes);
  for (std::size_t i = 0; i < logits.cells(); ++i) {
    softmax(logits.cell(i), p);
    double e = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) e += p[k] * values[k];
    out[i] = e;
  }
  return out;
}

ForwardPass forward(const HeadOutputs& heads, std::span<const CountGrid> gt_counts,
                    const CounterSpec& spec) {
  validate(heads, gt_counts, spec);
  const std::size_t n = heads.size() - 1;
  ForwardPass fp;
  fp.masks.resize(n + 1);
  fp.upmaps.resize(n + 1);
  for (const auto& h : heads) fp.counts.push_back(stage_counts(h, spec));

  double l_counter_total = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const Grid& gt = gt_counts[i].grid();
    const double inv = 1.0 / static_cast<double>(gt.size());
    double s = 0.0;
    if (spec.mode == Mode::Regression) {
      for (std::size_t k = 0; k < gt.size(); ++k) {
        const double t =
            std::abs(std::min(heads[i].counts[k], spec.c_max) - std::min(gt[k], spec.c_max)) * inv;
        fp.terms.push_back(t);
        s += t;
      }
    } else {
      const auto labels = class_labels(gt_counts[i], *spec.partition);
      std::vector<double> p(spec.classes());
      for (std::size_t k = 0; k < labels.size(); ++k) {
        const auto cell = heads[i].class_logits.cell(k);
        const double t = (softmax(cell, p) - cell[labels[k]]) * inv;
        fp.terms.push_back(t);
        s += t;
      }
    }
    l_counter_total += s;
  }

  fp.divs.push_back(fp.counts[0]);
  for (std::size_t i = 1; i <= n; ++i) {
    Grid w = heads[i].mask_logits;
    for (double& v : w.values()) {
      require_finite(v, "mask logits");
      v = sigmoid(v);
    }
    fp.masks[i] = std::move(w);
    fp.upmaps[i] = spatial_softmax2(heads[i].up_logits).grid();
    const Grid up = hadamard(kron_upsample2(fp.divs[i - 1]), fp.upmaps[i]);
    Grid div(up.height(), up.width());
    for (std::size_t k = 0; k < div.size(); ++k) {
      div[k] = (1.0 - fp.masks[i][k]) * up[k] + fp.masks[i][k] * fp.counts[i][k];
    }
    fp.divs.push_back(std::move(div));
  }

  double merge = 0.0;
  {
    const Grid& gt = gt_counts[n].grid();
    const double inv = 1.0 / static_cast<double>(gt.size());
    for (std::size_t k = 0; k < gt.size(); ++k) {
      const double t = std::abs(fp.divs[n][k] - gt[k]) * inv;
      fp.terms.push_back(t);
      merge += t;
    }
  }

  double up_total = 0.0;
  double div_total = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const Grid u_gt = gt::gt_upsampling_map(gt_counts[i - 1], gt_counts[i]).grid();
    const double inv = 1.0 / static_cast<double>(u_gt.size());
    for (std::size_t k = 0; k < u_gt.size(); ++k) {
      const double t = std::abs(fp.upmaps[i][k] - u_gt[k]) * inv;
      fp.terms.push_back(t);
      up_total += t;
    }
    const Grid& parent_gt = gt_counts[i - 1].grid();
    const Grid& logits = heads[i].mask_logits;
    const double inv_parent = 1.0 / static_cast<double>(parent_gt.size());
    for (std::size_t r = 0; r < parent_gt.height(); ++r) {
      for (std::size_t c = 0; c < parent_gt.width(); ++c) {
        if (!(parent_gt(r, c) > spec.c_max)) continue;
        const auto cells = block_cells(r, c, logits.width());
        // -log(sigmoid(a)) = softplus(-a); the sigmoid is monotone so the
        // mask block max sits at the logit block max.
        const double t = softplus(-logits[first_argmax(logits, cells)]) * inv_parent;
        fp.terms.push_back(t);
        div_total += t;
      }
    }
  }

  LossParts parts{l_counter_total, merge, up_total, div_total, std::nullopt};
  if (spec.mode == Mode::Regression) {
    double eq = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      const Grid& parent = fp.counts[i - 1];
      const Grid sums = block_sum2(fp.counts[i]);
      const Grid& gt = gt_counts[i - 1].grid();
      const double inv = 1.0 / static_cast<double>(parent.size());
      for (std::size_t k = 0; k < parent.size(); ++k) {
        if (gt[k] <= spec.c_max) {
          const double t = std::abs(parent[k] - sums[k]) * inv;
          fp.terms.push_back(t);
          eq += t;
        }
      }
    }
    parts.eq = eq;
  }
  fp.loss = total_loss(spec.mode, parts);
  require_finite(fp.loss.total, "total loss");
  return fp;
}

Gradients gradients(const HeadOutputs& heads, std::span<const CountGrid> gt_counts,
                    const CounterSpec& spec) {
  const ForwardPass fp = forward(heads, gt_counts, spec);
  const std::size_t n = heads.size() - 1;

  // Gradients w.r.t. merged counts C_i, masks W_i and upsampling weights U_i.
  std::vector<Grid> g_counts;
  std::vector<Grid> g_w(n + 1);
  std::vector<Grid> g_u(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    g_counts.emplace_back(fp.counts[i].height(), fp.counts[i].width());
    if (i > 0) {
      g_w[i] = Grid(fp.counts[i].height(), fp.counts[i].width());
      g_u[i] = Grid(fp.counts[i].height(), fp.counts[i].width());
    }
  }

  Gradients out;
  out.loss = fp.loss;
  out.grad.resize(heads.size());
  for (std::size_t i = 0; i <= n; ++i) {
    auto& g = out.grad[i];
    if (spec.mode == Mode::Regression) {
      g.counts = Grid(heads[i].counts.height(), heads[i].counts.width());
    } else {
      const auto& l = heads[i].class_logits;
      g.class_logits = ClassScores(l.height, l.width, l.classes);
    }
    if (i > 0) {
      g.mask_logits = Grid(heads[i].mask_logits.height(), heads[i].mask_logits.width());
      g.up_logits = Grid(heads[i].up_logits.height(), heads[i].up_logits.width());
    }
  }

  // Merging loss, then back through the merge recursion.
  {
    const Grid& gt = gt_counts[n].grid();
    Grid g_div(gt.height(), gt.width());
    const double inv = 1.0 / static_cast<double>(gt.size());
    for (std::size_t k = 0; k < gt.size(); ++k) g_div[k] = sgn(fp.divs[n][k] - gt[k]) * inv;
    for (std::size_t i = n; i >= 1; --i) {
      const Grid up = kron_upsample2(fp.divs[i - 1]);
      Grid g_up(up.height(), up.width());
      for (std::size_t k = 0; k < up.size(); ++k) {
        const double w = fp.masks[i][k];
        const double u = fp.upmaps[i][k];
        const double c_hat = up[k] * u;
        g_w[i][k] += g_div[k] * (fp.counts[i][k] - c_hat);
        g_counts[i][k] += g_div[k] * w;
        const double g_chat = g_div[k] * (1.0 - w);
        g_u[i][k] += g_chat * up[k];
        g_up[k] = g_chat * u;
      }
      g_div = block_sum2(g_up);
    }
    for (std::size_t k = 0; k < g_div.size(); ++k) g_counts[0][k] += g_div[k];
  }

  // Upsampling loss.
  for (std::size_t i = 1; i <= n; ++i) {
    const Grid u_gt = gt::gt_upsampling_map(gt_counts[i - 1], gt_counts[i]).grid();
    const double inv = 1.0 / static_cast<double>(u_gt.size());
    for (std::size_t k = 0; k < u_gt.size(); ++k) {
      g_u[i][k] += sgn(fp.upmaps[i][k] - u_gt[k]) * inv;
    }
  }

  // Consistency loss acts on the merged counts directly.
  if (spec.mode == Mode::Regression) {
    for (std::size_t i = 1; i <= n; ++i) {
      const Grid& parent = fp.counts[i - 1];
      const Grid sums = block_sum2(fp.counts[i]);
      const Grid& gt = gt_counts[i - 1].grid();
      const double inv = 1.0 / static_cast<double>(parent.size());
      for (std::size_t r = 0; r < parent.height(); ++r) {
        for (std::size_t c = 0; c < parent.width(); ++c) {
          const std::size_t k = r * parent.width() + c;
          if (gt[k] > spec.c_max) continue;
          const double s = sgn(parent[k] - sums[k]) * inv;
          g_counts[i - 1][k] += s;
          for (auto cell : block_cells(r, c, fp.counts[i].width())) g_counts[i][cell] -= s;
        }
      }
    }
  }

  // Masks: sigmoid backward, plus the division loss on the block argmax.
  for (std::size_t i = 1; i <= n; ++i) {
    auto& g_a = out.grad[i].mask_logits;
    const Grid& logits = heads[i].mask_logits;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      const double w = fp.masks[i][k];
      g_a[k] = g_w[i][k] * w * (1.0 - w);
    }
    const Grid& parent_gt = gt_counts[i - 1].grid();
    const double inv = 1.0 / static_cast<double>(parent_gt.size());
    for (std::size_t r = 0; r < parent_gt.height(); ++r) {
      for (std::size_t c = 0; c < parent_gt.width(); ++c) {
        if (!(parent_gt(r, c) > spec.c_max)) continue;
        const auto k = first_argmax(logits, block_cells(r, c, logits.width()));
        // d softplus(-a) / da = -(1 - sigmoid(a))
        g_a[k] -= (1.0 - fp.masks[i][k]) * inv;
      }
    }
  }

  // Upsampling weights: per-block softmax backward.
  for (std::size_t i = 1; i <= n; ++i) {
    auto& g_l = out.grad[i].up_logits;
    const Grid& u = fp.upmaps[i];
    for (std::size_t r = 0; r < u.height() / 2; ++r) {
      for (std::size_t c = 0; c < u.width() / 2; ++c) {
        const auto cells = block_cells(r, c, u.width());
        double dot = 0.0;
        for (auto k : cells) dot += u[k] * g_u[i][k];
        for (auto k : cells) g_l[k] = u[k] * (g_u[i][k] - dot);
      }
    }
  }

  // Counter heads.
  for (std::size_t i = 0; i <= n; ++i) {
    const Grid& gt = gt_counts[i].grid();
    const double inv = 1.0 / static_cast<double>(gt.size());
    if (spec.mode == Mode::Regression) {
      auto& g = out.grad[i].counts;
      for (std::size_t k = 0; k < gt.size(); ++k) {
        const double raw = heads[i].counts[k];
        double v = 0.0;
        if (raw < spec.c_max) {
          v += sgn(raw - std::min(gt[k], spec.c_max)) * inv;
        }
        if (raw > 0.0 && raw < spec.c_max) {
          v += g_counts[i][k];
        }
        g[k] = v;
      }
    } else {
      const auto labels = class_labels(gt_counts[i], *spec.partition);
      const auto values = gt::class_values(*spec.partition);
      auto& g = out.grad[i].class_logits;
      std::vector<double> p(spec.classes());
      for (std::size_t k = 0; k < labels.size(); ++k) {
        softmax(heads[i].class_logits.cell(k), p);
        const double expected = fp.counts[i][k];
        auto gk = g.cell(k);
        for (std::size_t m = 0; m < p.size(); ++m) {
          const double ce = (p[m] - (m == labels[k] ? 1.0 : 0.0)) * inv;
          gk[m] = ce + g_counts[i][k] * p[m] * (values[m] - expected);
        }
      }
    }
  }

  for (const auto& g : out.grad) {
    for (double v : g.counts.values()) require_finite(v, "counter gradient");
    for (double v : g.class_logits.values) require_finite(v, "class gradient");
    for (double v : g.mask_logits.values()) require_finite(v, "mask gradient");
    for (double v : g.up_logits.values()) require_finite(v, "upsampling gradient");
  }
  return out;
}

}  // namespace sdc::loss
