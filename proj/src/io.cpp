#include "sdc/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sdc::io {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw IoError("cannot open for writing: " + path.string());
  }
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("cannot open for reading: " + path.string());
  }
  return is;
}

double parse_double(std::string_view text, const char* what) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  while (last != first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    throw FormatError(std::string("cannot parse ") + what + ": '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::string grid_header(const Grid& g) {
  return "{\"h\":" + std::to_string(g.height()) + ",\"w\":" + std::to_string(g.width()) +
         ",\"dtype\":\"f64\"}";
}

void write_f64_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> bytes{};
  for (std::size_t i = 0; i < 8; ++i) {
    bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  }
  os.write(bytes.data(), bytes.size());
}

double read_f64_le(std::istream& is) {
  std::array<unsigned char, 8> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (is.gcount() != 8) {
    throw FormatError("truncated fp64 payload");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

void write_grid(std::ostream& os, const Grid& g) {
  os << grid_header(g) << '\n';
  for (double v : g.values()) {
    write_f64_le(os, v);
  }
}

Grid read_grid(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) {
    throw FormatError("missing grid header");
  }
  std::size_t h = 0;
  std::size_t w = 0;
  try {
    const auto j = nlohmann::json::parse(header);
    if (j.at("dtype").get<std::string>() != "f64") {
      throw FormatError("unsupported grid dtype");
    }
    h = j.at("h").get<std::size_t>();
    w = j.at("w").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad grid header: ") + e.what());
  }
  if (h == 0 || w == 0) {
    throw FormatError("grid header has zero dimension");
  }
  std::vector<double> values(h * w);
  for (double& v : values) {
    v = read_f64_le(is);
  }
  return Grid(h, w, std::move(values));
}

void write_grid(const std::filesystem::path& path, const Grid& g) {
  auto os = open_out(path);
  write_grid(os, g);
  if (!os) {
    throw IoError("write failed: " + path.string());
  }
}

Grid read_grid(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_grid(is);
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) {
    throw IoError("cannot format double");
  }
  return std::string(buf.data(), ptr);
}

void write_points_csv(const std::filesystem::path& path, const std::vector<Point>& points) {
  auto os = open_out(path);
  os << "x,y\n";
  for (const auto& p : points) {
    os << format_double(p.x) << ',' << format_double(p.y) << '\n';
  }
  if (!os) {
    throw IoError("write failed: " + path.string());
  }
}

std::vector<Point> read_points_csv(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line)) {
    throw FormatError("empty annotation file: " + path.string());
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y") {
    throw FormatError("annotation header must be 'x,y': " + path.string());
  }
  std::vector<Point> points;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw FormatError("annotation row without comma: " + line);
    }
    std::string_view sv(line);
    points.push_back({parse_double(sv.substr(0, comma), "x"),
                      parse_double(sv.substr(comma + 1), "y")});
  }
  return points;
}

std::string read_text(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  auto os = open_out(path);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) {
    throw IoError("write failed: " + path.string());
  }
}

}  // namespace sdc::io
