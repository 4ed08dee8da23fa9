#include "sdc/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "sdc/parallel.hpp"

namespace sdc::theory {

int min_divisions(double c_star, double c_max) {
  if (!(c_star > 0.0) || !(c_max > 0.0) || !std::isfinite(c_star) || !std::isfinite(c_max)) {
    throw PreconditionError("min_divisions needs positive finite counts");
  }
  // Smallest N >= 0 with 4^N * c_max >= c_star; powers of four are exact.
  int n = 0;
  double capacity = c_max;
  while (capacity < c_star) {
    capacity *= 4.0;
    ++n;
  }
  return n;
}

int max_divisions(double h, double w, double r) {
  if (!(h > 0.0) || !(w > 0.0) || !(r > 0.0)) {
    throw PreconditionError("max_divisions needs positive sizes");
  }
  // frexp gives ratio = f * 2^e with f in [0.5, 1), so floor(log2(ratio)) = e - 1.
  int e = 0;
  std::frexp(std::max(h, w) / r, &e);
  return e;
}

int brute_force_min_divisions(const CountGrid& fine_counts, double c_max) {
  const std::size_t side = fine_counts.height();
  if (side != fine_counts.width() || (side & (side - 1)) != 0) {
    throw PreconditionError("fine grid must be square with power-of-two side");
  }
  const Grid& g = fine_counts.grid();
  int levels = 0;
  while ((std::size_t{1} << levels) < side) ++levels;
  for (int n = 0; n <= levels; ++n) {
    const std::size_t block = side >> n;
    bool fits = true;
    for (std::size_t br = 0; br < side && fits; br += block) {
      for (std::size_t bc = 0; bc < side && fits; bc += block) {
        double s = 0.0;
        for (std::size_t r = br; r < br + block; ++r) {
          for (std::size_t c = bc; c < bc + block; ++c) s += g(r, c);
        }
        fits = s <= c_max;
      }
    }
    if (fits) return n;
  }
  throw PreconditionError("a single finest cell exceeds c_max; no division suffices");
}

int min_region_side(const CountGrid& counts, double c_max) {
  const Grid& g = counts.grid();
  const std::size_t h = g.height();
  const std::size_t w = g.width();
  // Summed-area table with a zero border.
  std::vector<double> sat((h + 1) * (w + 1), 0.0);
  auto at = [&](std::size_t r, std::size_t c) -> double& { return sat[r * (w + 1) + c]; };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      at(r + 1, c + 1) = g(r, c) + at(r, c + 1) + at(r + 1, c) - at(r, c);
    }
  }
  const std::size_t longest = std::max(h, w);
  for (std::size_t s = 1; s <= longest; ++s) {
    const std::size_t sh = std::min(s, h);
    const std::size_t sw = std::min(s, w);
    for (std::size_t r = 0; r + sh <= h; ++r) {
      for (std::size_t c = 0; c + sw <= w; ++c) {
        // Direct summation avoids cancellation in the table differences.
        const double approx = at(r + sh, c + sw) - at(r, c + sw) - at(r + sh, c) + at(r, c);
        if (approx < c_max - 1e-9 * std::max(1.0, c_max)) continue;
        double exact = 0.0;
        for (std::size_t i = r; i < r + sh; ++i) {
          for (std::size_t j = c; j < c + sw; ++j) exact += g(i, j);
        }
        if (exact >= c_max) return static_cast<int>(s);
      }
    }
  }
  throw PreconditionError("grid holds fewer than c_max objects");
}

std::vector<Prop1Row> prop1_sweep(int instances, std::uint64_t seed, std::size_t side) {
  if (instances < 0 || side == 0 || (side & (side - 1)) != 0) {
    throw PreconditionError("sweep needs instances >= 0 and a power-of-two side");
  }
  std::vector<Prop1Row> rows;
  for (int id = 0; id < instances; ++id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), 0x9e37u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Prop1Row row;
    row.id = id;
    row.c_max = 1.0 + 29.0 * unit(rng);
    const double density = 0.05 + 0.95 * unit(rng);
    Grid g(side, side);
    do {
      for (double& v : g.values()) v = unit(rng) < density ? row.c_max * unit(rng) : 0.0;
    } while (!(g.sum() > row.c_max));
    const CountGrid counts(std::move(g));
    row.total = counts.sum();
    row.region_side = min_region_side(counts, row.c_max);
    const auto s = static_cast<double>(side);
    row.bounds = {min_divisions(row.total, row.c_max), max_divisions(s, s, row.region_side)};
    row.oracle = brute_force_min_divisions(counts, row.c_max);
    rows.push_back(row);
  }
  return rows;
}

ErrorProfile::ErrorProfile(std::vector<double> xs, std::vector<double> fs)
    : xs_(std::move(xs)), fs_(std::move(fs)) {
  if (xs_.empty() || xs_.size() != fs_.size()) {
    throw PreconditionError("error profile needs matching non-empty knots");
  }
  for (std::size_t i = 0; i < xs_.size(); ++i) {
    if (!std::isfinite(xs_[i]) || !std::isfinite(fs_[i]) || fs_[i] < 0.0) {
      throw PreconditionError("error profile values must be finite and >= 0");
    }
    if (i > 0 && !(xs_[i] > xs_[i - 1])) {
      throw PreconditionError("error profile knots must be strictly increasing");
    }
  }
}

double ErrorProfile::operator()(double x) const {
  if (x <= xs_.front()) return fs_.front();
  if (x >= xs_.back()) return fs_.back();
  const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  const auto i = static_cast<std::size_t>(it - xs_.begin());
  const double t = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
  return fs_[i - 1] + t * (fs_[i] - fs_[i - 1]);
}

double ErrorProfile::max_on(double x_hi) const {
  double m = std::max((*this)(0.0), (*this)(x_hi));
  for (std::size_t i = 0; i < xs_.size(); ++i) {
    if (xs_[i] >= 0.0 && xs_[i] <= x_hi) m = std::max(m, fs_[i]);
  }
  return m;
}

SplitInstance::SplitInstance(std::vector<double> parts, double c_max)
    : parts_(std::move(parts)), c_max_(c_max) {
  if (parts_.empty() || !(c_max > 0.0)) {
    throw PreconditionError("split needs parts and a positive c_max");
  }
  for (double c : parts_) {
    if (!std::isfinite(c) || c < 0.0 || c > c_max) {
      throw PreconditionError("every part must lie in [0, c_max]");
    }
    total_ += c;
  }
}

McReport mc_verify_prop2(const ErrorProfile& profile, const SplitInstance& split,
                         std::int64_t trials, std::uint64_t seed, int jobs) {
  const double c_star = split.total();
  if (!(c_star > split.c_max())) {
    throw PreconditionError("c_star must exceed c_max");
  }
  const double closed_max = profile.max_on(split.c_max());
  if (!(profile(c_star) > closed_max)) {
    throw PreconditionError("f(c_star) must exceed max of f on [0, c_max]");
  }
  if (trials < 2) {
    throw PreconditionError("need at least two trials");
  }

  // E|N(0, s^2)| = s sqrt(2 / pi)
  const double to_scale = 1.0 / std::sqrt(2.0 / std::numbers::pi);
  const double open_scale = profile(c_star) * to_scale;
  std::vector<double> part_scale;
  for (double c : split.parts()) part_scale.push_back(profile(c) * to_scale);

  constexpr std::int64_t kChunk = 4096;
  const auto chunks = static_cast<std::size_t>((trials + kChunk - 1) / kChunk);
  struct Moments {
    double open = 0.0, open_sq = 0.0, closed = 0.0, closed_sq = 0.0;
  };
  std::vector<Moments> partial(chunks);
  parallel_for(chunks, jobs, [&](std::size_t chunk) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chunk), 0x5dc0u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::int64_t begin = static_cast<std::int64_t>(chunk) * kChunk;
    const std::int64_t end = std::min(trials, begin + kChunk);
    Moments m;
    for (std::int64_t t = begin; t < end; ++t) {
      const double open = c_star * std::abs(open_scale * normal(rng));
      double sum = 0.0;
      for (std::size_t i = 0; i < part_scale.size(); ++i) {
        sum += split.parts()[i] * part_scale[i] * normal(rng);
      }
      const double closed = std::abs(sum);
      m.open += open;
      m.open_sq += open * open;
      m.closed += closed;
      m.closed_sq += closed * closed;
    }
    partial[chunk] = m;
  });

  Moments total;
  for (const auto& m : partial) {
    total.open += m.open;
    total.open_sq += m.open_sq;
    total.closed += m.closed;
    total.closed_sq += m.closed_sq;
  }
  const auto n = static_cast<double>(trials);
  McReport rep;
  rep.trials = trials;
  rep.emp_open = total.open / n;
  rep.emp_closed = total.closed / n;
  rep.bound = closed_max * c_star;
  auto stderr_of = [n](double sum, double sq) {
    const double mean = sum / n;
    const double var = std::max(0.0, (sq / n - mean * mean) * n / (n - 1.0));
    return std::sqrt(var / n);
  };
  rep.se_open = stderr_of(total.open, total.open_sq);
  rep.se_closed = stderr_of(total.closed, total.closed_sq);
  rep.closed_within_bound = rep.emp_closed <= rep.bound + 3.0 * rep.se_closed;
  rep.bound_below_open = rep.bound < rep.emp_open + 3.0 * rep.se_open;
  rep.closed_below_open = rep.emp_closed < rep.emp_open;
  return rep;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) {
    throw PreconditionError("histograms must share the same non-empty bins");
  }
  double sp = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !(q[i] >= 0.0)) {
      throw PreconditionError("histogram mass must be >= 0");
    }
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw PreconditionError("histograms must sum to 1");
  }
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::clamp(js, 0.0, std::numbers::ln2);
}

std::vector<double> count_histogram(std::span<const double> values, double bin_width,
                                    std::size_t n_bins) {
  if (values.empty() || !(bin_width > 0.0) || n_bins == 0) {
    throw PreconditionError("histogram needs values, a positive width and bins");
  }
  std::vector<double> h(n_bins, 0.0);
  for (double v : values) {
    if (!(v >= 0.0)) throw PreconditionError("histogram values must be >= 0");
    const auto k = std::min(static_cast<std::size_t>(v / bin_width), n_bins - 1);
    h[k] += 1.0;
  }
  for (double& v : h) v /= static_cast<double>(values.size());
  return h;
}

}  // namespace sdc::theory
