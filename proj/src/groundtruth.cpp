#include "sdc/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sdc::gt {

AnnotationSet::AnnotationSet(std::vector<Point> points, std::size_t height, std::size_t width)
    : points_(std::move(points)), h_(height), w_(width) {
  if (height == 0 || width == 0) {
    throw std::invalid_argument("annotation image dimensions must be positive");
  }
  for (const auto& p : points_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0 ||
        p.x >= static_cast<double>(width) || p.y >= static_cast<double>(height)) {
      throw std::invalid_argument("annotation outside image bounds");
    }
  }
}

std::vector<double> kernel_sigmas(const AnnotationSet& ann, const Kernel& kernel) {
  const auto pts = ann.points();
  std::vector<double> sigmas(pts.size());
  if (const auto* fixed = std::get_if<FixedKernel>(&kernel)) {
    if (!(fixed->sigma > 0.0) || !std::isfinite(fixed->sigma)) {
      throw std::invalid_argument("kernel sigma must be positive");
    }
    std::fill(sigmas.begin(), sigmas.end(), fixed->sigma);
    return sigmas;
  }
  const auto& ad = std::get<AdaptiveKernel>(kernel);
  if (!(ad.beta > 0.0) || ad.k < 1 || !(ad.min_sigma > 0.0) || ad.max_sigma < ad.min_sigma) {
    throw std::invalid_argument("adaptive kernel needs beta > 0, k >= 1, 0 < min <= max sigma");
  }
  std::vector<double> dists;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    dists.clear();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) {
        dists.push_back(std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y));
      }
    }
    if (dists.empty()) {
      sigmas[i] = ad.max_sigma;
      continue;
    }
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(ad.k), dists.size());
    std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k), dists.end());
    double mean = 0.0;
    for (std::size_t t = 0; t < k; ++t) mean += dists[t];
    mean /= static_cast<double>(k);
    sigmas[i] = std::clamp(ad.beta * mean, ad.min_sigma, ad.max_sigma);
  }
  return sigmas;
}

DensityMap render_density(const AnnotationSet& ann, const Kernel& kernel) {
  const auto sigmas = kernel_sigmas(ann, kernel);
  const auto h = static_cast<long>(ann.height());
  const auto w = static_cast<long>(ann.width());
  Grid density(ann.height(), ann.width());
  std::vector<double> wx;
  std::vector<double> wy;
  const auto pts = ann.points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double sigma = sigmas[i];
    const long radius = static_cast<long>(std::ceil(4.0 * sigma));
    // Separable kernel over the window centred on the point's pixel.
    const long cx = static_cast<long>(std::floor(pts[i].x));
    const long cy = static_cast<long>(std::floor(pts[i].y));
    const double inv = 1.0 / (2.0 * sigma * sigma);
    wx.assign(static_cast<std::size_t>(2 * radius + 1), 0.0);
    wy.assign(wx.size(), 0.0);
    double sx = 0.0;
    double sy = 0.0;
    for (long d = -radius; d <= radius; ++d) {
      const double dx = static_cast<double>(cx + d) + 0.5 - pts[i].x;
      const double dy = static_cast<double>(cy + d) + 0.5 - pts[i].y;
      wx[static_cast<std::size_t>(d + radius)] = std::exp(-dx * dx * inv);
      wy[static_cast<std::size_t>(d + radius)] = std::exp(-dy * dy * inv);
      sx += wx[static_cast<std::size_t>(d + radius)];
      sy += wy[static_cast<std::size_t>(d + radius)];
    }
    const double norm = 1.0 / (sx * sy);
    for (long dr = -radius; dr <= radius; ++dr) {
      const long r = cy + dr;
      if (r < 0 || r >= h) continue;
      const double ry = wy[static_cast<std::size_t>(dr + radius)] * norm;
      for (long dc = -radius; dc <= radius; ++dc) {
        const long c = cx + dc;
        if (c < 0 || c >= w) continue;
        density(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) +=
            ry * wx[static_cast<std::size_t>(dc + radius)];
      }
    }
  }
  return DensityMap(std::move(density));
}

CountGrid patch_counts(const Grid& density, std::size_t patch) {
  if (patch == 0 || density.height() % patch != 0 || density.width() % patch != 0) {
    throw GridError("patch_counts: " + shape_string(density) + " not divisible by patch " +
                    std::to_string(patch));
  }
  Grid out(density.height() / patch, density.width() / patch);
  for (std::size_t r = 0; r < density.height(); ++r) {
    for (std::size_t c = 0; c < density.width(); ++c) {
      out(r / patch, c / patch) += density(r, c);
    }
  }
  return CountGrid(std::move(out));
}

std::vector<CountGrid> count_pyramid(const DensityMap& density, std::size_t base_patch,
                                     int levels) {
  if (levels < 0 || (base_patch >> levels) == 0 || ((base_patch >> levels) << levels) != base_patch) {
    throw std::invalid_argument("count_pyramid: base patch cannot be halved " +
                                std::to_string(levels) + " times");
  }
  std::vector<CountGrid> out;
  out.reserve(static_cast<std::size_t>(levels) + 1);
  for (int i = 0; i <= levels; ++i) {
    out.push_back(patch_counts(density, base_patch >> i));
  }
  return out;
}

PartitionScheme parse_scheme(std::string_view name) {
  if (name == "one-linear") return PartitionScheme::OneLinear;
  if (name == "two-linear") return PartitionScheme::TwoLinear;
  throw std::invalid_argument("unknown partition scheme: " + std::string(name));
}

std::string_view scheme_name(PartitionScheme scheme) {
  return scheme == PartitionScheme::OneLinear ? "one-linear" : "two-linear";
}

IntervalPartition::IntervalPartition(double c_max, std::vector<double> boundaries,
                                     PartitionScheme scheme)
    : c_max_(c_max), boundaries_(std::move(boundaries)), scheme_(scheme) {
  if (boundaries_.empty() || !(boundaries_.front() > 0.0)) {
    throw std::invalid_argument("partition needs positive boundaries");
  }
  for (std::size_t i = 1; i < boundaries_.size(); ++i) {
    if (!(boundaries_[i] > boundaries_[i - 1])) {
      throw std::invalid_argument("partition boundaries must be strictly increasing");
    }
  }
  if (boundaries_.back() != c_max_) {
    throw std::invalid_argument("last partition boundary must equal c_max");
  }
}

double IntervalPartition::lower(std::size_t cls) const {
  if (cls == 0 || cls > boundaries_.size()) {
    throw std::out_of_range("not an interior class: " + std::to_string(cls));
  }
  return cls == 1 ? 0.0 : boundaries_[cls - 2];
}

double IntervalPartition::upper(std::size_t cls) const {
  if (cls == 0 || cls > boundaries_.size()) {
    throw std::out_of_range("not an interior class: " + std::to_string(cls));
  }
  return boundaries_[cls - 1];
}

IntervalPartition build_partition(double c_max, PartitionScheme scheme) {
  const double halves = c_max * 2.0;
  if (!std::isfinite(c_max) || !(c_max > 0.0) || halves != std::round(halves)) {
    throw std::invalid_argument("c_max must be a positive multiple of 0.5");
  }
  const auto steps = static_cast<int>(std::lround(halves));
  std::vector<double> b;
  if (scheme == PartitionScheme::TwoLinear) {
    for (int k = 1; k <= 10; ++k) b.push_back(k / 20.0);
  } else {
    b.push_back(0.5);
  }
  for (int k = 2; k <= steps; ++k) b.push_back(k * 0.5);
  return IntervalPartition(c_max, std::move(b), scheme);
}

std::size_t count_to_class(double count, const IntervalPartition& partition) {
  if (!std::isfinite(count) || count < 0.0) {
    throw std::invalid_argument("count must be finite and >= 0");
  }
  if (count == 0.0) return 0;
  const auto b = partition.boundaries();
  const auto it = std::lower_bound(b.begin(), b.end(), count);
  return static_cast<std::size_t>(it - b.begin()) + 1;
}

double class_to_count(std::size_t cls, const IntervalPartition& partition) {
  if (cls >= partition.class_count()) {
    throw std::out_of_range("class index out of range: " + std::to_string(cls));
  }
  if (cls == 0) return 0.0;
  if (cls == partition.overflow_class()) return partition.c_max();
  return 0.5 * (partition.lower(cls) + partition.upper(cls));
}

std::vector<double> class_values(const IntervalPartition& partition) {
  std::vector<double> v(partition.class_count());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = class_to_count(k, partition);
  return v;
}

double quantile_cmax(std::span<const double> patch_counts, double q) {
  if (patch_counts.empty()) {
    throw std::invalid_argument("quantile of empty sequence");
  }
  if (!(q > 0.0 && q <= 1.0)) {
    throw std::invalid_argument("quantile must lie in (0, 1]");
  }
  std::vector<double> sorted(patch_counts.begin(), patch_counts.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // Guard q*n landing a hair above an integer, e.g. 0.95 * 100.
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return std::ceil(sorted[rank - 1] * 2.0) / 2.0;
}

UpsamplingMap gt_upsampling_map(const CountGrid& c_prev, const CountGrid& c_cur) {
  if (c_cur.height() != 2 * c_prev.height() || c_cur.width() != 2 * c_prev.width()) {
    throw GridError("gt_upsampling_map: child grid must be twice the parent size");
  }
  Grid u(c_cur.height(), c_cur.width());
  for (std::size_t r = 0; r < c_cur.height(); ++r) {
    for (std::size_t c = 0; c < c_cur.width(); ++c) {
      const double parent = c_prev(r / 2, c / 2);
      u(r, c) = parent > 0.0 ? c_cur(r, c) / parent : 0.25;
    }
  }
  return UpsamplingMap(std::move(u));
}

FlagGrid division_labels(const CountGrid& c_gt, double c_max) {
  FlagGrid out{c_gt.height(), c_gt.width(), std::vector<unsigned char>(c_gt.grid().size())};
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = c_gt.grid()[i] > c_max ? 1 : 0;
  }
  return out;
}

}  // namespace sdc::gt
