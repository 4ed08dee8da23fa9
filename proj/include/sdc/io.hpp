#pragma once

// On-disk formats shared across the project.
//
// Grid file: one UTF-8 JSON header line {"h":H,"w":W,"dtype":"f64"} followed
// by H*W little-endian IEEE-754 doubles in row-major order.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sdc/grid.hpp"

namespace sdc::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file content (bad header, truncated payload, bad CSV row).
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

std::string grid_header(const Grid& g);
void write_grid(std::ostream& os, const Grid& g);
Grid read_grid(std::istream& is);
void write_grid(const std::filesystem::path& path, const Grid& g);
Grid read_grid(const std::filesystem::path& path);

void write_f64_le(std::ostream& os, double v);
double read_f64_le(std::istream& is);

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Annotation CSV: header `x,y`, one point per row.
void write_points_csv(const std::filesystem::path& path, const std::vector<Point>& points);
std::vector<Point> read_points_csv(const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace sdc::io
