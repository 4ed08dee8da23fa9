#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "sdc/groundtruth.hpp"
#include "sdc/io.hpp"
#include "sdc/synthcells.hpp"
#include "test_util.hpp"

using namespace sdc;
using namespace sdc::synth;
using sdc::testing::TempDir;

namespace {

std::vector<int> counts_by_subregion(const std::vector<io::Point>& pts, int size, int sub) {
  const int per = size / sub;
  std::vector<int> out(static_cast<std::size_t>(per * per), 0);
  for (const auto& p : pts) {
    const int r = static_cast<int>(p.y) / sub;
    const int c = static_cast<int>(p.x) / sub;
    ++out[static_cast<std::size_t>(r * per + c)];
  }
  return out;
}

// Continuous Gaussian mass of each point inside [x0, x1) x [y0, y1).
double spill_oracle(const std::vector<io::Point>& pts, double sigma, double x0, double x1,
                    double y0, double y1) {
  auto frac = [sigma](double a, double b, double m) {
    const double k = sigma * std::sqrt(2.0);
    return 0.5 * (std::erf((b - m) / k) - std::erf((a - m) / k));
  };
  double s = 0.0;
  for (const auto& p : pts) s += frac(x0, x1, p.x) * frac(y0, y1, p.y);
  return s;
}

SynthSpec small_spec(int lo, int hi, int size = 128) {
  SynthSpec s;
  s.n_images = 4;
  s.image_size = size;
  s.count_lo = lo;
  s.count_hi = hi;
  return s;
}

}  // namespace

TEST_SUITE("synthcells") {

TEST_CASE("spec validation") {
  SynthSpec s;
  CHECK_NOTHROW(s.validate());
  s.image_size = 100;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = SynthSpec{};
  s.count_lo = 5;
  s.count_hi = 4;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = SynthSpec{};
  s.blob.sigma = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("blank and single-cell images") {
  const auto blank = gen_image(small_spec(0, 0), 1);
  CHECK(blank.points.empty());
  CHECK(blank.image.sum() == 0.0);

  const auto one = gen_image(small_spec(1, 1), 2);
  REQUIRE(one.points.size() == 4);
  CHECK(counts_by_subregion(one.points, 128, 64) == std::vector<int>{1, 1, 1, 1});
  CHECK(one.subregion_counts == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("placements respect the count law") {
  SynthSpec s;
  s.count_lo = 2;
  s.count_hi = 13;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto img = gen_image(s, image_seed(77, i));
    const auto direct = counts_by_subregion(img.points, 256, 64);
    CHECK(direct == img.subregion_counts);
    for (int n : direct) {
      CHECK(n >= 2);
      CHECK(n <= 13);
    }
    for (double v : img.image.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("impossible packing falls back to overlap") {
  SynthSpec s = small_spec(400, 400, 64);
  const auto img = gen_image(s, 5);
  CHECK(img.points.size() == 400);
  for (const auto& p : img.points) {
    CHECK(p.x >= 0.0);
    CHECK(p.x < 64.0);
  }
}

TEST_CASE("ground truth follows placements") {
  SynthSpec s;
  const double sigma = DatasetConfig::defaults().gt_sigma;
  double placed = 0.0;
  double measured = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto img = gen_image(s, image_seed(3, i));
    const auto d = gt::render_density(gt::AnnotationSet(img.points, 256, 256),
                                      gt::FixedKernel{sigma});
    const auto pc = gt::patch_counts(d, 64);
    for (std::size_t r = 1; r < 3; ++r) {
      for (std::size_t c = 1; c < 3; ++c) {
        const double oracle =
            spill_oracle(img.points, sigma, 64.0 * c, 64.0 * (c + 1), 64.0 * r, 64.0 * (r + 1));
        CHECK(std::abs(pc(r, c) - oracle) <= 0.05 * std::max(1.0, oracle));
        placed += img.subregion_counts[r * 4 + c];
        measured += pc(r, c);
      }
    }
  }
  CHECK(std::abs(measured - placed) <= 0.05 * placed);
}

TEST_CASE("determinism") {
  const SynthSpec s = small_spec(0, 6);
  const auto a = gen_image(s, 99);
  const auto b = gen_image(s, 99);
  CHECK(a.image == b.image);
  CHECK(a.points == b.points);
  CHECK_FALSE(gen_image(s, 100).points == a.points);
  CHECK(image_seed(1, 0) != image_seed(1, 1));
  CHECK(image_seed(1, 0) != image_seed(2, 0));
}

TEST_CASE("default config") {
  const auto cfg = DatasetConfig::defaults();
  CHECK(cfg.train.n_images == 500);
  CHECK(cfg.test.n_images == 500);
  CHECK(cfg.train.image_size == 256);
  CHECK(cfg.train.subregion == 64);
  CHECK(cfg.train.count_lo == 0);
  CHECK(cfg.train.count_hi == 10);
  CHECK(cfg.test.count_hi == 20);
  CHECK(cfg.train.blob.sigma == 3.0);
  CHECK(cfg.train.blob.peak == 0.8);
  CHECK(cfg.train.blob.min_separation == 4.0);
}

TEST_CASE("config json") {
  const auto cfg = DatasetConfig::defaults();
  const auto back = config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));

  const auto partial = config_from_json(nlohmann::json::parse(R"({"train":{"n_images":3}})"));
  CHECK(partial.train.n_images == 3);
  CHECK(partial.train.count_hi == 10);
  CHECK(partial.test.n_images == 500);

  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"bogus":1})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"train":{"n_image":3}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"train":{"n_images":"x"}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"gt_sigma":0})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"test":{"image_size":128}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse("[]")), std::invalid_argument);
}

TEST_CASE("gen_dataset and manifest") {
  DatasetConfig cfg;
  cfg.train = small_spec(0, 10);
  cfg.train.n_images = 3;
  cfg.train.seed = 11;
  cfg.test = small_spec(0, 20);
  cfg.test.n_images = 2;
  cfg.test.seed = 12;

  TempDir a("ds_a");
  TempDir b("ds_b");
  const auto ma = gen_dataset(cfg, a.path(), 1);
  gen_dataset(cfg, b.path(), 4);
  CHECK(ma == a / "manifest.json");

  const auto m = read_manifest(ma);
  REQUIRE(m.entries.size() == 5);
  CHECK(m.split("train").size() == 3);
  CHECK(m.split("test").size() == 2);
  for (const auto& e : m.entries) {
    for (const auto& rel : {e.image, e.annotations}) {
      CHECK(io::read_text(a / rel) == io::read_text(b / rel));
    }
    const auto pts = io::read_points_csv(a / e.annotations);
    CHECK(counts_by_subregion(pts, 128, 64) == e.subregion_counts);
    const int cap = e.split == "train" ? 10 : 20;
    for (int n : e.subregion_counts) CHECK(n <= cap);
    const Grid img = io::read_grid(a / e.image);
    CHECK(img.height() == 128);
  }
  CHECK(io::read_text(a / "manifest.json") == io::read_text(b / "manifest.json"));
  CHECK(m.config.train.n_images == 3);

  CHECK_THROWS_AS(read_manifest(a / "missing.json"), io::IoError);
  io::write_text(a / "bad.json", "{\"config\":{}}");
  CHECK_THROWS_AS(read_manifest(a / "bad.json"), io::FormatError);
}

}
