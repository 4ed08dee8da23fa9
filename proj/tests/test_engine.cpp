#include <doctest.h>

#include <cmath>
#include <random>

#include "sdc/engine.hpp"
#include "sdc/io.hpp"
#include "test_util.hpp"

using namespace sdc;
using namespace sdc::engine;

namespace {

UpsamplingMap random_upmap(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  return spatial_softmax2(sdc::testing::random_grid(rng, h, w, -3.0, 3.0));
}

// Per-cell evaluation of the merge from its definition, no grid algebra.
double merge_cell_oracle(const Grid& prev, const Grid& c, const Grid& w, const Grid& u,
                         std::size_t r, std::size_t col) {
  return (1.0 - w(r, col)) * prev(r / 2, col / 2) * u(r, col) + w(r, col) * c(r, col);
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("guided_upsample") {
  CHECK(guided_upsample(CountGrid{{4}}, UpsamplingMap::uniform(2, 2)).grid() ==
        Grid(2, 2, 1.0));
  CHECK(guided_upsample(CountGrid{{4}}, UpsamplingMap{{0.5, 0.5}, {0, 0}}).grid() ==
        Grid{{2, 2}, {0, 0}});
  CHECK_THROWS_AS(guided_upsample(CountGrid{{4, 1}}, UpsamplingMap::uniform(2, 2)), GridError);

  std::mt19937_64 rng(21);
  for (int t = 0; t < 50; ++t) {
    const CountGrid prev(sdc::testing::random_grid(rng, 3, 2, 0, 20));
    const auto up = guided_upsample(prev, random_upmap(rng, 6, 4));
    CHECK(std::abs(up.sum() - prev.sum()) <= 1e-12 * prev.sum());
  }
}

TEST_CASE("merge_step") {
  const CountGrid c{{2, 2}, {2, 2}};
  const auto u = UpsamplingMap::uniform(2, 2);
  CHECK(merge_step(CountGrid{{4}}, c, DivisionMask(Grid(2, 2, 1.0)), u) == c);

  const CountGrid prev{{3, 5}};
  const auto keep = merge_step(prev, CountGrid(Grid(2, 4, 9.0)), DivisionMask(Grid(2, 4, 0.0)),
                               UpsamplingMap::uniform(2, 4));
  CHECK(keep.grid() == scaled(kron_upsample2(prev.grid()), 0.25));
  CHECK(keep.sum() == doctest::Approx(prev.sum()).epsilon(1e-15));

  const auto mixed = merge_step(CountGrid{{4}}, c, DivisionMask{{1, 0}, {0, 1}}, u);
  CHECK(mixed.grid() == Grid{{2, 1}, {1, 2}});

  CHECK_THROWS_AS(merge_step(CountGrid{{4}}, CountGrid(Grid(2, 4)), DivisionMask(Grid(2, 4)),
                             UpsamplingMap::uniform(2, 4)),
                  GridError);
  CHECK_THROWS_AS(merge_step(CountGrid{{4}}, c, DivisionMask(Grid(2, 4)), u), GridError);

  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const Grid p = sdc::testing::random_grid(rng, 2, 3, 0, 30);
    const Grid cc = sdc::testing::random_grid(rng, 4, 6, 0, 10);
    const Grid ww = sdc::testing::random_grid(rng, 4, 6, 0, 1);
    const auto um = random_upmap(rng, 4, 6);
    const auto out = merge_step(CountGrid(p), CountGrid(cc), DivisionMask(ww), um);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t col = 0; col < 6; ++col) {
        CHECK(out(r, col) ==
              doctest::Approx(merge_cell_oracle(p, cc, ww, um.grid(), r, col)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("run") {
  const StageModel fixed{
      [](int i) { return CountGrid(Grid(1u << i, 1u << i, 7.0 / (1 << (2 * i)) + i)); },
      [](int i) { return DivisionMask(Grid(1u << i, 1u << i, 1.0)); },
      [](int i) { return UpsamplingMap::uniform(1u << i, 1u << i); },
  };

  SUBCASE("n = 0") {
    int decider_calls = 0;
    StageModel m = fixed;
    m.decider = [&](int i) {
      ++decider_calls;
      return fixed.decider(i);
    };
    const auto tr = run(m, 0);
    REQUIRE(tr.divs.size() == 1);
    CHECK(tr.divs[0] == CountGrid{{7}});
    CHECK_FALSE(tr.stages[0].mask.has_value());
    CHECK(decider_calls == 0);
    CHECK(image_count(tr) == 7.0);
  }
  SUBCASE("n = 1, full replacement") {
    const auto tr = run(fixed, 1);
    REQUIRE(tr.divs.size() == 2);
    CHECK(tr.divs[1] == tr.stages[1].counts);
    CHECK(tr.divs[1].height() == 2);
  }
  SUBCASE("n = 2, no division conserves") {
    StageModel m = fixed;
    m.decider = [](int i) { return DivisionMask(Grid(1u << i, 1u << i, 0.0)); };
    std::mt19937_64 rng(23);
    m.upsampler = [&](int i) { return random_upmap(rng, 1u << i, 1u << i); };
    const auto tr = run(m, 2);
    REQUIRE(tr.divs.size() == 3);
    CHECK(tr.divs[2].height() == 4);
    CHECK(std::abs(image_count(tr) - 7.0) <= 1e-12 * 7.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(run(fixed, -1), std::invalid_argument);
    StageModel bad = fixed;
    bad.counter = [](int i) { return CountGrid(Grid(1u << i, 3, 1.0)); };
    CHECK_THROWS_AS(run(bad, 1), GridError);
    StageModel bad_mask = fixed;
    bad_mask.decider = [](int) { return DivisionMask(Grid(1, 1, 0.0)); };
    CHECK_THROWS_AS(run(bad_mask, 1), GridError);
  }
}

TEST_CASE("image_count") {
  SdcTrace tr;
  CHECK_THROWS_AS(image_count(tr), std::invalid_argument);
  tr.divs.push_back(CountGrid{{2, 1}, {1, 2}});
  CHECK(image_count(tr) == 6.0);
  tr.divs.push_back(CountGrid(Grid(4, 4, 0.0)));
  CHECK(image_count(tr) == 0.0);
}

TEST_CASE("write_trace") {
  sdc::testing::TempDir tmp("trace");
  std::mt19937_64 rng(24);
  const StageModel m{
      [](int i) { return CountGrid(Grid(1u << i, 1u << i, 1.0)); },
      [](int i) { return DivisionMask(Grid(1u << i, 1u << i, 0.5)); },
      [&](int i) { return random_upmap(rng, 1u << i, 1u << i); },
  };
  const auto tr = run(m, 2);
  write_trace(tmp.path(), tr);
  for (int i = 0; i <= 2; ++i) {
    const auto idx = std::to_string(i);
    CHECK(io::read_grid(tmp / ("div_" + idx + ".grid")) == tr.divs[i].grid());
    CHECK(io::read_grid(tmp / ("c_" + idx + ".grid")) == tr.stages[i].counts.grid());
    CHECK(std::filesystem::exists(tmp / ("w_" + idx + ".grid")) == (i > 0));
    CHECK(std::filesystem::exists(tmp / ("u_" + idx + ".grid")) == (i > 0));
  }
  CHECK(io::read_grid(tmp / "u_2.grid") == tr.stages[2].upmap->grid());
}

}
