#include "sdc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sdc {

Grid::Grid(std::size_t height, std::size_t width, double fill)
    : h_(height), w_(width), values_(height * width, fill) {
  if (height == 0 || width == 0) {
    throw GridError("grid dimensions must be positive");
  }
}

Grid::Grid(std::size_t height, std::size_t width, std::vector<double> values)
    : h_(height), w_(width), values_(std::move(values)) {
  if (height == 0 || width == 0) {
    throw GridError("grid dimensions must be positive");
  }
  if (values_.size() != height * width) {
    throw GridError("grid value count does not match " + std::to_string(height) + "x" +
                    std::to_string(width));
  }
}

Grid::Grid(std::initializer_list<std::initializer_list<double>> rows) {
  h_ = rows.size();
  w_ = h_ == 0 ? 0 : rows.begin()->size();
  if (h_ == 0 || w_ == 0) {
    throw GridError("grid dimensions must be positive");
  }
  values_.reserve(h_ * w_);
  for (const auto& row : rows) {
    if (row.size() != w_) {
      throw GridError("ragged grid literal");
    }
    values_.insert(values_.end(), row.begin(), row.end());
  }
}

double Grid::sum() const noexcept {
  return std::accumulate(values_.begin(), values_.end(), 0.0);
}

double Grid::max() const {
  if (values_.empty()) {
    throw GridError("max of empty grid");
  }
  return *std::max_element(values_.begin(), values_.end());
}

std::string shape_string(const Grid& g) {
  return std::to_string(g.height()) + "x" + std::to_string(g.width());
}

void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (!a.same_shape(b)) {
    throw GridError(std::string(what) + ": dimension mismatch " + shape_string(a) + " vs " +
                    shape_string(b));
  }
}

void require_even_shape(const Grid& g, const char* what) {
  if (g.height() % 2 != 0 || g.width() % 2 != 0) {
    throw GridError(std::string(what) + ": dimensions must be even, got " + shape_string(g));
  }
}

CountGrid::CountGrid(Grid g) : g_(std::move(g)) {
  if (g_.empty()) {
    throw GridError("count grid must be non-empty");
  }
  for (double v : g_.values()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw GridError("count grid values must be finite and >= 0");
    }
  }
}

DivisionMask::DivisionMask(Grid g) : g_(std::move(g)) {
  if (g_.empty()) {
    throw GridError("division mask must be non-empty");
  }
  for (double v : g_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw GridError("division mask values must lie in [0, 1]");
    }
  }
}

UpsamplingMap::UpsamplingMap(Grid g) : g_(std::move(g)) {
  if (g_.empty()) {
    throw GridError("upsampling map must be non-empty");
  }
  require_even_shape(g_, "upsampling map");
  for (double v : g_.values()) {
    if (!(v >= 0.0 && v <= 1.0 + kBlockTolerance)) {
      throw GridError("upsampling map values must lie in [0, 1]");
    }
  }
  const Grid sums = block_sum2(g_);
  for (double s : sums.values()) {
    if (std::abs(s - 1.0) > kBlockTolerance) {
      throw GridError("upsampling map 2x2 block does not sum to 1");
    }
  }
}

UpsamplingMap UpsamplingMap::uniform(std::size_t height, std::size_t width) {
  return UpsamplingMap(Grid(height, width, 0.25));
}

Grid kron_upsample2(const Grid& g) {
  Grid out(2 * g.height(), 2 * g.width());
  for (std::size_t r = 0; r < out.height(); ++r) {
    for (std::size_t c = 0; c < out.width(); ++c) {
      out(r, c) = g(r / 2, c / 2);
    }
  }
  return out;
}

Grid hadamard(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "hadamard");
  Grid out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = a[i] * b[i];
  }
  return out;
}

Grid block_sum2(const Grid& g) {
  require_even_shape(g, "block_sum2");
  Grid out(g.height() / 2, g.width() / 2);
  for (std::size_t r = 0; r < out.height(); ++r) {
    for (std::size_t c = 0; c < out.width(); ++c) {
      out(r, c) = (g(2 * r, 2 * c) + g(2 * r, 2 * c + 1)) +
                  (g(2 * r + 1, 2 * c) + g(2 * r + 1, 2 * c + 1));
    }
  }
  return out;
}

UpsamplingMap spatial_softmax2(const Grid& logits) {
  require_even_shape(logits, "spatial_softmax2");
  for (double v : logits.values()) {
    if (!std::isfinite(v)) {
      throw GridError("spatial_softmax2: non-finite logit");
    }
  }
  Grid out(logits.height(), logits.width());
  for (std::size_t r = 0; r < logits.height(); r += 2) {
    for (std::size_t c = 0; c < logits.width(); c += 2) {
      const double m = std::max({logits(r, c), logits(r, c + 1), logits(r + 1, c),
                                 logits(r + 1, c + 1)});
      double e[4] = {std::exp(logits(r, c) - m), std::exp(logits(r, c + 1) - m),
                     std::exp(logits(r + 1, c) - m), std::exp(logits(r + 1, c + 1) - m)};
      const double z = (e[0] + e[1]) + (e[2] + e[3]);
      out(r, c) = e[0] / z;
      out(r, c + 1) = e[1] / z;
      out(r + 1, c) = e[2] / z;
      out(r + 1, c + 1) = e[3] / z;
    }
  }
  return UpsamplingMap(std::move(out));
}

Grid scaled(const Grid& g, double s) {
  Grid out = g;
  for (double& v : out.values()) {
    v *= s;
  }
  return out;
}

Grid added(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "add");
  Grid out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] += b[i];
  }
  return out;
}

Grid subtracted(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "subtract");
  Grid out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] -= b[i];
  }
  return out;
}

}  // namespace sdc
