#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "sdc/losses.hpp"

using namespace sdc;
using namespace sdc::loss;

namespace {

double sigmoid_ref(double a) { return 1.0 / (1.0 + std::exp(-a)); }

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("l_counter_reg") {
  CHECK(l_counter_reg(Grid{{1, 2}}, CountGrid{{1, 2}}, 22) == 0.0);
  CHECK(l_counter_reg(Grid{{25}}, CountGrid{{30}}, 22) == 0.0);
  CHECK(l_counter_reg(Grid{{5}}, CountGrid{{7}}, 22) == 2.0);
  CHECK(l_counter_reg(Grid{{5, 1}}, CountGrid{{7, 1}}, 22) == 1.0);
  CHECK(l_counter_reg(Grid{{-1}}, CountGrid{{0}}, 22) == 1.0);
  CHECK_THROWS_AS(l_counter_reg(Grid{{1, 2}}, CountGrid{{1}}, 22), GridError);
}

TEST_CASE("l_counter_cls") {
  ClassScores two(1, 1, 2, 0.0);
  const std::vector<std::size_t> label0{0};
  CHECK(l_counter_cls(two, label0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  ClassScores uniform(2, 2, 7, 1.3);
  const std::vector<std::size_t> labels{0, 3, 6, 2};
  CHECK(l_counter_cls(uniform, labels) == doctest::Approx(std::log(7.0)).epsilon(1e-14));

  ClassScores sharp(1, 1, 3, 0.0);
  sharp.values[1] = 800.0;
  const std::vector<std::size_t> label1{1};
  CHECK(l_counter_cls(sharp, label1) < 1e-300);
  sharp.values[1] = 30.0;
  CHECK(l_counter_cls(sharp, label1) == doctest::Approx(2 * std::exp(-30.0)).epsilon(1e-6));

  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(l_counter_cls(sharp, bad), LossError);
  CHECK_THROWS_AS(l_counter_cls(uniform, label0), LossError);
}

TEST_CASE("l_merge") {
  CHECK(l_merge(CountGrid{{1, 2}}, CountGrid{{1, 2}}) == 0.0);
  CHECK(l_merge(CountGrid{{1, 2}, {3, 4}}, CountGrid{{2, 2}, {3, 3}}) == 0.5);
}

TEST_CASE("l_div") {
  const std::vector<CountGrid> gt_ok{CountGrid{{20}}};
  const std::vector<DivisionMask> w{DivisionMask{{0.2, 0.9}, {0.1, 0.5}}};
  CHECK(l_div(w, gt_ok, 22) == 0.0);

  const std::vector<CountGrid> gt_hi{CountGrid{{25}}};
  CHECK(l_div(w, gt_hi, 22) == doctest::Approx(-std::log(0.9)).epsilon(1e-14));
  CHECK(l_div(w, gt_hi, 22) == doctest::Approx(0.1054).epsilon(1e-3));

  const std::vector<DivisionMask> sat{DivisionMask{{0.2, 1.0 - 1e-12}, {0.1, 0.5}}};
  CHECK(l_div(sat, gt_hi, 22) < 1e-11);

  // Averaged over all parent cells; only the flagged one contributes.
  const std::vector<CountGrid> gt_mixed{CountGrid{{25, 1}}};
  const std::vector<DivisionMask> w2{DivisionMask{{0.5, 0.1, 0.3, 0.2}, {0.4, 0.2, 0.1, 0.1}}};
  CHECK(l_div(w2, gt_mixed, 22) == doctest::Approx(-std::log(0.5) / 2).epsilon(1e-14));

  CHECK_THROWS_AS(l_div(w, std::vector<CountGrid>{}, 22), LossError);
  CHECK_THROWS_AS(l_div(w, std::vector<CountGrid>{CountGrid{{25, 1}}}, 22), LossError);
}

TEST_CASE("l_up") {
  const std::vector<UpsamplingMap> gt{UpsamplingMap{{0.25, 0.75}, {0, 0}}};
  CHECK(l_up(gt, gt) == 0.0);
  const std::vector<UpsamplingMap> uni{UpsamplingMap::uniform(2, 2)};
  CHECK(l_up(uni, gt) == doctest::Approx(0.25).epsilon(1e-15));

  // Swapping two blocks together with their targets leaves the loss unchanged.
  const std::vector<UpsamplingMap> a{UpsamplingMap{{0.1, 0.2, 0.4, 0.4}, {0.3, 0.4, 0.1, 0.1}}};
  const std::vector<UpsamplingMap> a_gt{UpsamplingMap{{0.25, 0.25, 0.5, 0}, {0.25, 0.25, 0.5, 0}}};
  const std::vector<UpsamplingMap> b{UpsamplingMap{{0.4, 0.4, 0.1, 0.2}, {0.1, 0.1, 0.3, 0.4}}};
  const std::vector<UpsamplingMap> b_gt{UpsamplingMap{{0.5, 0, 0.25, 0.25}, {0.5, 0, 0.25, 0.25}}};
  CHECK(l_up(a, a_gt) == doctest::Approx(l_up(b, b_gt)).epsilon(1e-15));

  CHECK_THROWS_AS(l_up(uni, std::vector<UpsamplingMap>{}), LossError);
}

TEST_CASE("l_eq") {
  const std::vector<CountGrid> gt{CountGrid{{10}}};
  const std::vector<CountGrid> consistent{CountGrid{{9}}, CountGrid{{2, 3}, {4, 0}}};
  CHECK(l_eq(consistent, gt, 22) == 0.0);
  const std::vector<CountGrid> off{CountGrid{{9}}, CountGrid{{2, 3}, {3.5, 0}}};
  CHECK(l_eq(off, gt, 22) == doctest::Approx(0.5).epsilon(1e-15));
  const std::vector<CountGrid> gt_hi{CountGrid{{30}}};
  CHECK(l_eq(off, gt_hi, 22) == 0.0);
  CHECK_THROWS_AS(l_eq(off, gt, 22, Mode::Classification), LossError);
}

TEST_CASE("total_loss") {
  const auto zero = total_loss(Mode::Regression, {0.0, 0.0, 0.0, 0.0, 0.0});
  CHECK(zero.total == 0.0);
  const auto reg = total_loss(Mode::Regression, {1.0, 2.0, 3.0, 4.0, 5.0});
  CHECK(reg.total == 15.0);
  REQUIRE(reg.l_eq.has_value());
  CHECK(*reg.l_eq == 5.0);
  const auto cls = total_loss(Mode::Classification, {1.0, 2.0, 3.0, 4.0, std::nullopt});
  CHECK(cls.total == 10.0);
  CHECK_FALSE(cls.l_eq.has_value());
  // An eq value handed to cls mode is never read.
  CHECK(total_loss(Mode::Classification, {1.0, 2.0, 3.0, 4.0, 1e9}).total == 10.0);
  CHECK_THROWS_AS(total_loss(Mode::Regression, {1.0, 2.0, 3.0, 4.0, std::nullopt}), LossError);
  CHECK_THROWS_AS(total_loss(Mode::Classification, {1.0, std::nullopt, 3.0, 4.0, 0.0}),
                  LossError);
}

TEST_CASE("stage_counts") {
  StageHeads h;
  h.counts = Grid{{-1, 3, 50}};
  CounterSpec reg{Mode::Regression, 10.0, std::nullopt};
  CHECK(stage_counts(h, reg) == Grid{{0, 3, 10}});

  CounterSpec cls{Mode::Classification, 1.0, gt::build_partition(1.0, gt::PartitionScheme::OneLinear)};
  // Classes {0}, (0, .5], (.5, 1], overflow -> values 0, .25, .75, 1.
  h.class_logits = ClassScores(1, 1, 4, 0.0);
  CHECK(stage_counts(h, cls)[0] == doctest::Approx((0 + 0.25 + 0.75 + 1.0) / 4));
  h.class_logits.values = {0.0, 0.0, 50.0, 0.0};
  CHECK(stage_counts(h, cls)[0] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("forward agrees with the standalone terms") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 40; ++t) {
    const auto mode = t % 2 ? Mode::Classification : Mode::Regression;
    const auto inst = sdc::testing::random_loss_instance(rng, mode);
    const auto fp = forward(inst.heads, inst.gt, inst.spec);
    const std::size_t n = inst.heads.size() - 1;

    // Recompute every component from the primitive grid operations.
    double counter = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      if (mode == Mode::Regression) {
        counter += l_counter_reg(inst.heads[i].counts, inst.gt[i], inst.spec.c_max);
      } else {
        std::vector<std::size_t> labels;
        for (double v : inst.gt[i].grid().values()) {
          labels.push_back(gt::count_to_class(v, *inst.spec.partition));
        }
        counter += l_counter_cls(inst.heads[i].class_logits, labels);
      }
    }
    CountGrid div(stage_counts(inst.heads[0], inst.spec));
    std::vector<DivisionMask> masks;
    std::vector<UpsamplingMap> ups;
    std::vector<UpsamplingMap> ups_gt;
    std::vector<CountGrid> merged{div};
    for (std::size_t i = 1; i <= n; ++i) {
      Grid w = inst.heads[i].mask_logits;
      for (double& v : w.values()) v = sigmoid_ref(v);
      masks.emplace_back(w);
      ups.push_back(spatial_softmax2(inst.heads[i].up_logits));
      ups_gt.push_back(gt::gt_upsampling_map(inst.gt[i - 1], inst.gt[i]));
      merged.emplace_back(stage_counts(inst.heads[i], inst.spec));
      Grid next(w.height(), w.width());
      for (std::size_t r = 0; r < w.height(); ++r) {
        for (std::size_t c = 0; c < w.width(); ++c) {
          next(r, c) = (1.0 - w(r, c)) * div(r / 2, c / 2) * ups.back().grid()(r, c) +
                       w(r, c) * merged.back()(r, c);
        }
      }
      div = CountGrid(next);
    }
    CHECK(fp.loss.l_counter == doctest::Approx(counter).epsilon(1e-12));
    CHECK(fp.loss.l_merge == doctest::Approx(l_merge(div, inst.gt[n])).epsilon(1e-12));
    CHECK(fp.loss.l_up == doctest::Approx(l_up(ups, ups_gt)).epsilon(1e-12));
    CHECK(fp.loss.l_div == doctest::Approx(l_div(masks, inst.gt, inst.spec.c_max)).epsilon(1e-12));
    if (mode == Mode::Regression) {
      REQUIRE(fp.loss.l_eq.has_value());
      CHECK(*fp.loss.l_eq == doctest::Approx(l_eq(merged, inst.gt, inst.spec.c_max)).epsilon(1e-12));
    } else {
      CHECK_FALSE(fp.loss.l_eq.has_value());
    }
    const double term_sum = std::accumulate(fp.terms.begin(), fp.terms.end(), 0.0);
    CHECK(fp.loss.total == doctest::Approx(term_sum).epsilon(1e-12));
  }
}

TEST_CASE("gradients match finite differences") {
  std::mt19937_64 rng(32);
  for (auto mode : {Mode::Regression, Mode::Classification}) {
    for (int t = 0; t < 15; ++t) {
      const auto inst = sdc::testing::random_loss_instance(rng, mode);
      const auto rep = sdc::testing::fd_check(inst);
      if (!rep.smooth) continue;
      CHECK(rep.max_rel < 1e-4);
    }
  }
}

TEST_CASE("zero loss gives zero gradient") {
  // Single stage-0 cell predicted exactly, regression.
  HeadOutputs heads(1);
  heads[0].counts = Grid{{3.0, 0.5}};
  const std::vector<CountGrid> gt{CountGrid{{3.0, 0.5}}};
  const CounterSpec spec{Mode::Regression, 10.0, std::nullopt};
  const auto g = gradients(heads, gt, spec);
  CHECK(g.loss.total == 0.0);
  for (double v : g.grad[0].counts.values()) CHECK(v == 0.0);
}

TEST_CASE("input validation") {
  const CounterSpec reg{Mode::Regression, 10.0, std::nullopt};
  CHECK_THROWS_AS(forward(HeadOutputs{}, std::vector<CountGrid>{}, reg), LossError);
  HeadOutputs heads(2);
  heads[0].counts = Grid{{1}};
  heads[1].counts = Grid(2, 2, 1.0);
  heads[1].mask_logits = Grid(2, 2);
  heads[1].up_logits = Grid(2, 2);
  CHECK_THROWS_AS(forward(heads, std::vector<CountGrid>{CountGrid{{4}}}, reg), LossError);
  const std::vector<CountGrid> gt{CountGrid{{4}}, CountGrid(Grid(2, 2, 1.0))};
  CHECK_NOTHROW(forward(heads, gt, reg));
  heads[1].up_logits = Grid(2, 4);
  CHECK_THROWS_AS(forward(heads, gt, reg), GridError);
  heads[1].up_logits = Grid(2, 2);
  heads[1].counts(0, 0) = NAN;
  CHECK_THROWS_AS(forward(heads, gt, reg), LossError);
  const CounterSpec cls{Mode::Classification, 10.0, std::nullopt};
  CHECK_THROWS_AS(forward(heads, gt, cls), LossError);
}

}
