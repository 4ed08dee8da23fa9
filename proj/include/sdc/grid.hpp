#pragma once

// Dense fp64 grids and the block algebra the S-DC merge is written in.
//
// All grids are row-major. Documentation uses 1-based block notation
// ([2j-1:2j, 2k-1:2k]); code indexes from 0, so the block of parent cell
// (r, c) covers child rows 2r..2r+1 and columns 2c..2c+1.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdc {

class GridError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, double fill = 0.0);
  Grid(std::size_t height, std::size_t width, std::vector<double> values);
  /// Nested-list literal, rows must be equal length.
  Grid(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * w_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * w_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double sum() const noexcept;
  double max() const;
  bool same_shape(const Grid& other) const noexcept {
    return h_ == other.h_ && w_ == other.w_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<double> values_;
};

std::string shape_string(const Grid& g);
void require_same_shape(const Grid& a, const Grid& b, const char* what);
void require_even_shape(const Grid& g, const char* what);

/// Local object counts at one pyramid level. Values finite and >= 0.
class CountGrid {
 public:
  CountGrid() = default;
  explicit CountGrid(Grid g);
  CountGrid(std::initializer_list<std::initializer_list<double>> rows)
      : CountGrid(Grid(rows)) {}

  const Grid& grid() const noexcept { return g_; }
  std::size_t height() const noexcept { return g_.height(); }
  std::size_t width() const noexcept { return g_.width(); }
  double operator()(std::size_t r, std::size_t c) const { return g_(r, c); }
  double sum() const noexcept { return g_.sum(); }

  friend bool operator==(const CountGrid&, const CountGrid&) = default;

 private:
  Grid g_;
};

/// Soft division weights W_i, every value in [0, 1].
class DivisionMask {
 public:
  DivisionMask() = default;
  explicit DivisionMask(Grid g);
  DivisionMask(std::initializer_list<std::initializer_list<double>> rows)
      : DivisionMask(Grid(rows)) {}

  const Grid& grid() const noexcept { return g_; }
  std::size_t height() const noexcept { return g_.height(); }
  std::size_t width() const noexcept { return g_.width(); }

 private:
  Grid g_;
};

/// Redistribution weights U_i: values in [0, 1], each disjoint 2x2 block
/// sums to 1 within kBlockTolerance.
class UpsamplingMap {
 public:
  static constexpr double kBlockTolerance = 1e-9;

  UpsamplingMap() = default;
  explicit UpsamplingMap(Grid g);
  UpsamplingMap(std::initializer_list<std::initializer_list<double>> rows)
      : UpsamplingMap(Grid(rows)) {}

  static UpsamplingMap uniform(std::size_t height, std::size_t width);

  const Grid& grid() const noexcept { return g_; }
  std::size_t height() const noexcept { return g_.height(); }
  std::size_t width() const noexcept { return g_.width(); }

 private:
  Grid g_;
};

// Grid algebra.

/// C (x) 1_{2x2}: every cell replicated into a 2x2 block.
Grid kron_upsample2(const Grid& g);
inline CountGrid kron_upsample2(const CountGrid& g) {
  return CountGrid(kron_upsample2(g.grid()));
}

Grid hadamard(const Grid& a, const Grid& b);

/// Sum of each disjoint 2x2 block. Requires even dimensions.
Grid block_sum2(const Grid& g);
inline CountGrid block_sum2(const CountGrid& g) { return CountGrid(block_sum2(g.grid())); }

/// Softmax over the four logits of each disjoint 2x2 block, computed with
/// max subtraction.
UpsamplingMap spatial_softmax2(const Grid& logits);

Grid scaled(const Grid& g, double s);
Grid added(const Grid& a, const Grid& b);
Grid subtracted(const Grid& a, const Grid& b);

}  // namespace sdc
