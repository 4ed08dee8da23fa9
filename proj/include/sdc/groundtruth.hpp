#pragma once

// Ground truth from dot annotations: density maps, patch count pyramids,
// count-interval classes, upsampling targets and division labels.

#include <cstddef>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "sdc/grid.hpp"
#include "sdc/io.hpp"

namespace sdc::gt {

using io::Point;

/// Dot annotations for an image of size height x width.
class AnnotationSet {
 public:
  AnnotationSet(std::vector<Point> points, std::size_t height, std::size_t width);

  std::span<const Point> points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }

 private:
  std::vector<Point> points_;
  std::size_t h_;
  std::size_t w_;
};

struct FixedKernel {
  double sigma = 4.0;
};

/// sigma_i = beta * mean distance to the k nearest other annotations,
/// clamped to [min_sigma, max_sigma]. Isolated points use max_sigma.
struct AdaptiveKernel {
  double beta = 0.3;
  int k = 3;
  double min_sigma = 1.0;
  double max_sigma = 32.0;
};

using Kernel = std::variant<FixedKernel, AdaptiveKernel>;

/// Per-pixel object density, values >= 0.
using DensityMap = CountGrid;

/// Per-point kernel widths for an annotation set.
std::vector<double> kernel_sigmas(const AnnotationSet& ann, const Kernel& kernel);

/// Sums one normalized Gaussian per annotation. Each kernel is truncated to a
/// square window of radius ceil(4 sigma), renormalized to unit sum over that
/// window, then clipped at the image border. Pixel (r, c) is centred at
/// (c + 0.5, r + 0.5).
DensityMap render_density(const AnnotationSet& ann, const Kernel& kernel);

/// Integrates density over non-overlapping patch x patch tiles.
CountGrid patch_counts(const Grid& density, std::size_t patch);
inline CountGrid patch_counts(const DensityMap& density, std::size_t patch) {
  return patch_counts(density.grid(), patch);
}

/// Ground-truth counts at stage 0..levels, patch size base_patch / 2^i.
std::vector<CountGrid> count_pyramid(const DensityMap& density, std::size_t base_patch,
                                     int levels);

enum class PartitionScheme { OneLinear, TwoLinear };

PartitionScheme parse_scheme(std::string_view name);
std::string_view scheme_name(PartitionScheme scheme);

/// Count-interval partition for a classification counter.
///
/// Class 0 is {0}; class m in [1, M] is (b_{m-1}, b_m] with b_0 = 0 and
/// b_M = c_max; class M + 1 is the overflow interval (c_max, inf).
class IntervalPartition {
 public:
  IntervalPartition(double c_max, std::vector<double> boundaries, PartitionScheme scheme);

  double c_max() const noexcept { return c_max_; }
  PartitionScheme scheme() const noexcept { return scheme_; }
  std::span<const double> boundaries() const noexcept { return boundaries_; }
  std::size_t class_count() const noexcept { return boundaries_.size() + 2; }
  std::size_t overflow_class() const noexcept { return boundaries_.size() + 1; }

  /// Lower and upper edge of an interior class.
  double lower(std::size_t cls) const;
  double upper(std::size_t cls) const;

 private:
  double c_max_;
  std::vector<double> boundaries_;
  PartitionScheme scheme_;
};

/// One-linear: step 0.5 up to c_max. Two-linear: additionally splits
/// (0, 0.5] into ten 0.05-wide intervals.
IntervalPartition build_partition(double c_max, PartitionScheme scheme);

std::size_t count_to_class(double count, const IntervalPartition& partition);
/// Midpoint of an interior interval; 0 for class 0; c_max for overflow.
double class_to_count(std::size_t cls, const IntervalPartition& partition);
/// Representative count of every class, indexed by class.
std::vector<double> class_values(const IntervalPartition& partition);

/// Nearest-rank quantile rounded up to the next multiple of 0.5.
double quantile_cmax(std::span<const double> patch_counts, double q);

/// U^gt = C_i^gt / (C_{i-1}^gt (x) 1_{2x2}); blocks with a zero parent are
/// uniform 0.25. Throws GridError if the pyramid is not block-consistent.
UpsamplingMap gt_upsampling_map(const CountGrid& c_prev, const CountGrid& c_cur);

/// Boolean grid stored as 0/1 bytes.
struct FlagGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<unsigned char> values;

  bool operator()(std::size_t r, std::size_t c) const { return values[r * width + c] != 0; }
};

/// True where the count strictly exceeds c_max.
FlagGrid division_labels(const CountGrid& c_gt, double c_max);

}  // namespace sdc::gt
