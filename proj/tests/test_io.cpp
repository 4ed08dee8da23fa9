#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "sdc/io.hpp"
#include "test_util.hpp"

using namespace sdc;
using sdc::testing::TempDir;

TEST_SUITE("io") {

TEST_CASE("grid header and byte layout") {
  const Grid g{{1.0, -2.5}};
  CHECK(io::grid_header(g) == R"({"h":1,"w":2,"dtype":"f64"})");

  std::ostringstream os;
  io::write_grid(os, g);
  const std::string bytes = os.str();
  const std::string header = R"({"h":1,"w":2,"dtype":"f64"})";
  REQUIRE(bytes.size() == header.size() + 1 + 16);
  CHECK(bytes.substr(0, header.size() + 1) == header + "\n");
  // 1.0 = 0x3FF0000000000000, little-endian.
  const std::string one("\x00\x00\x00\x00\x00\x00\xf0\x3f", 8);
  CHECK(bytes.substr(header.size() + 1, 8) == one);
}

TEST_CASE("grid round trip is bit exact") {
  std::mt19937_64 rng(5);
  TempDir tmp("io");
  for (int t = 0; t < 10; ++t) {
    Grid g = sdc::testing::random_grid(rng, 1 + t, 3 + t, -1e6, 1e6);
    g[0] = std::numeric_limits<double>::denorm_min();
    g[1] = -0.0;
    const auto path = tmp / ("g" + std::to_string(t) + ".grid");
    io::write_grid(path, g);
    const Grid back = io::read_grid(path);
    REQUIRE(back.height() == g.height());
    REQUIRE(back.width() == g.width());
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::signbit(back[i]) == std::signbit(g[i]));
      CHECK(back[i] == g[i]);
    }
  }
}

TEST_CASE("malformed grid files") {
  {
    std::istringstream is("");
    CHECK_THROWS_AS(io::read_grid(is), io::FormatError);
  }
  {
    std::istringstream is("not json\n");
    CHECK_THROWS_AS(io::read_grid(is), io::FormatError);
  }
  {
    std::istringstream is(R"({"h":1,"w":1,"dtype":"f32"})" "\n12345678");
    CHECK_THROWS_AS(io::read_grid(is), io::FormatError);
  }
  {
    std::istringstream is(R"({"h":0,"w":1,"dtype":"f64"})" "\n");
    CHECK_THROWS_AS(io::read_grid(is), io::FormatError);
  }
  {
    std::istringstream is(R"({"h":1,"w":2,"dtype":"f64"})" "\n12345678abc");
    CHECK_THROWS_AS(io::read_grid(is), io::FormatError);
  }
  CHECK_THROWS_AS(io::read_grid(std::filesystem::path("/nonexistent/x.grid")), io::IoError);
}

TEST_CASE("annotation csv") {
  TempDir tmp("csv");
  const std::vector<io::Point> pts{{0.1, 2.0}, {255.999, 1e-7}, {3.0 / 7.0, 128.5}};
  const auto path = tmp / "a.csv";
  io::write_points_csv(path, pts);
  CHECK(io::read_text(path).rfind("x,y\n", 0) == 0);
  CHECK(io::read_points_csv(path) == pts);

  io::write_text(path, "x,y\r\n1.5, 2\r\n\r\n3,4\r\n");
  const auto crlf = io::read_points_csv(path);
  REQUIRE(crlf.size() == 2);
  CHECK(crlf[0] == io::Point{1.5, 2.0});
  CHECK(crlf[1] == io::Point{3.0, 4.0});

  io::write_text(path, "x,y\n");
  CHECK(io::read_points_csv(path).empty());

  io::write_text(path, "y,x\n1,2\n");
  CHECK_THROWS_AS(io::read_points_csv(path), io::FormatError);
  io::write_text(path, "x,y\n1 2\n");
  CHECK_THROWS_AS(io::read_points_csv(path), io::FormatError);
  io::write_text(path, "x,y\n1,abc\n");
  CHECK_THROWS_AS(io::read_points_csv(path), io::FormatError);
  io::write_text(path, "");
  CHECK_THROWS_AS(io::read_points_csv(path), io::FormatError);
}

TEST_CASE("format_double round trips") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1e9, 1e9);
  for (int t = 0; t < 1000; ++t) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(t % 40) - 20);
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK(io::format_double(0.5) == "0.5");
  CHECK(io::format_double(22.0) == "22");
}

}
