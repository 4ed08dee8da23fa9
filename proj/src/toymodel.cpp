#include "sdc/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sdc/io.hpp"
#include "sdc/parallel.hpp"
#include "sdc/theory.hpp"

namespace sdc::toy {

namespace {

using loss::Mode;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Grid local_maxima(const Grid& image) {
  const auto h = static_cast<long>(image.height());
  const auto w = static_cast<long>(image.width());
  Grid out(image.height(), image.width());
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      const double v = image(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      if (!(v > kMaximaThreshold)) continue;
      bool peak = true;
      for (long dr = -1; dr <= 1 && peak; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const long rr = r + dr;
          const long cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          if (!(v > image(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)))) {
            peak = false;
            break;
          }
        }
      }
      if (peak) out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1.0;
    }
  }
  return out;
}

void check_image(const Grid& image, int level) {
  if (image.empty() || image.height() % kBasePatch != 0 || image.width() % kBasePatch != 0) {
    throw GridError("image dimensions " + shape_string(image) + " are not multiples of 64");
  }
  if (level < 0 || level > kMaxLevel) {
    throw GridError("feature level must lie in [0, " + std::to_string(kMaxLevel) + "]");
  }
  for (double v : image.values()) {
    if (!std::isfinite(v)) throw GridError("image contains a non-finite value");
  }
}

FeatureGrid pool(const Grid& image, const Grid& maxima, int level) {
  const std::size_t patch = kBasePatch >> level;
  const std::size_t bin = patch / 4;
  FeatureGrid f;
  f.height = image.height() / patch;
  f.width = image.width() / patch;
  f.values.assign(f.cells() * kFeatureDim, 0.0);
  for (std::size_t r = 0; r < image.height(); ++r) {
    for (std::size_t c = 0; c < image.width(); ++c) {
      const double v = image(r, c);
      double* x = &f.values[((r / patch) * f.width + c / patch) * kFeatureDim];
      x[((r % patch) / bin) * 4 + (c % patch) / bin] += v;
      x[16] += v;
      x[17] = std::max(x[17], v);
      x[18] += maxima(r, c);
    }
  }
  return f;
}

void scale_features(const SdcModel& m, std::span<const double> raw, std::span<double> out) {
  for (std::size_t j = 0; j < kFeatureDim; ++j) out[j] = raw[j] / m.feature_scale[j];
}

void require_levels(std::span<const FeatureGrid> features, int stages) {
  if (stages < 0 || features.size() < static_cast<std::size_t>(stages) + 1) {
    throw std::invalid_argument("features for levels 0.." + std::to_string(stages) + " required");
  }
}

std::vector<double> collect(const SdcModel& m) {
  std::vector<double> p;
  p.reserve(m.parameter_count());
  for (const LinearHead* h : {&m.counter, &m.decider, &m.upsampler}) {
    p.insert(p.end(), h->weights.begin(), h->weights.end());
    p.insert(p.end(), h->bias.begin(), h->bias.end());
  }
  return p;
}

void accumulate(std::vector<double>& g, std::size_t outputs, std::span<const double> x,
                std::size_t o, double d) {
  if (d == 0.0) return;
  double* row = &g[o * kFeatureDim];
  for (std::size_t j = 0; j < kFeatureDim; ++j) row[j] += d * x[j];
  g[outputs * kFeatureDim + o] += d;
}

void sgd_step(LinearHead& h, const std::vector<double>& g, double lr) {
  for (std::size_t i = 0; i < h.weights.size(); ++i) h.weights[i] -= lr * g[i];
  for (std::size_t o = 0; o < h.outputs; ++o) h.bias[o] -= lr * g[h.weights.size() + o];
}

std::vector<double> pooled(std::span<const Sample> samples, int level) {
  std::vector<double> v;
  for (const auto& s : samples) {
    if (s.gt.size() <= static_cast<std::size_t>(level)) continue;
    const auto vals = s.gt[static_cast<std::size_t>(level)].grid().values();
    v.insert(v.end(), vals.begin(), vals.end());
  }
  return v;
}

}  // namespace

FeatureGrid extract_features(const Grid& image, int level) {
  check_image(image, level);
  return pool(image, local_maxima(image), level);
}

std::vector<FeatureGrid> extract_pyramid(const Grid& image, int levels) {
  check_image(image, levels);
  const Grid maxima = local_maxima(image);
  std::vector<FeatureGrid> out;
  for (int l = 0; l <= levels; ++l) out.push_back(pool(image, maxima, l));
  return out;
}

void LinearHead::apply(std::span<const double> x, std::span<double> out) const {
  for (std::size_t o = 0; o < outputs; ++o) {
    const double* row = &weights[o * kFeatureDim];
    double s = bias[o];
    for (std::size_t j = 0; j < kFeatureDim; ++j) s += row[j] * x[j];
    out[o] = s;
  }
}

SdcModel SdcModel::create(Mode mode, int stages, double c_max, gt::PartitionScheme scheme,
                          std::uint64_t init_seed, double init_std) {
  if (stages < 0 || stages > kMaxLevel) {
    throw std::invalid_argument("stages must lie in [0, " + std::to_string(kMaxLevel) + "]");
  }
  if (!(c_max > 0.0) || !std::isfinite(c_max)) throw std::invalid_argument("c_max must be positive");
  if (!(init_std >= 0.0)) throw std::invalid_argument("init_std must be >= 0");
  SdcModel m;
  m.mode = mode;
  m.stages = stages;
  m.c_max = c_max;
  m.scheme = scheme;
  m.feature_scale.fill(1.0);
  std::size_t k = 1;
  if (mode == Mode::Classification) {
    m.partition = gt::build_partition(c_max, scheme);
    k = m.partition->class_count();
  }
  m.counter = LinearHead(k);
  m.decider = LinearHead(1);
  m.upsampler = LinearHead(1);
  if (init_std > 0.0) {
    std::mt19937_64 rng(init_seed);
    std::normal_distribution<double> normal(0.0, init_std);
    for (LinearHead* h : {&m.counter, &m.decider, &m.upsampler}) {
      for (double& w : h->weights) w = normal(rng);
    }
  }
  return m;
}

loss::CounterSpec SdcModel::counter_spec() const {
  return loss::CounterSpec{mode, c_max, partition};
}

std::size_t SdcModel::parameter_count() const noexcept {
  return counter.parameter_count() + decider.parameter_count() + upsampler.parameter_count();
}

std::vector<double> SdcModel::parameters() const { return collect(*this); }

void SdcModel::set_parameters(std::span<const double> p) {
  if (p.size() != parameter_count()) {
    throw std::invalid_argument("expected " + std::to_string(parameter_count()) + " parameters");
  }
  std::size_t at = 0;
  for (LinearHead* h : {&counter, &decider, &upsampler}) {
    for (double& w : h->weights) w = p[at++];
    for (double& b : h->bias) b = p[at++];
  }
}

void fit_feature_scale(SdcModel& model, std::span<const FeatureGrid> level0) {
  std::array<double, kFeatureDim> sq{};
  std::size_t n = 0;
  for (const auto& f : level0) {
    for (std::size_t i = 0; i < f.cells(); ++i) {
      const auto x = f.cell(i);
      for (std::size_t j = 0; j < kFeatureDim; ++j) sq[j] += x[j] * x[j];
      ++n;
    }
  }
  for (std::size_t j = 0; j < kFeatureDim; ++j) {
    const double rms = n > 0 ? std::sqrt(sq[j] / static_cast<double>(n)) : 0.0;
    model.feature_scale[j] = rms > 0.0 ? rms : 1.0;
  }
}

loss::HeadOutputs head_outputs(const SdcModel& model, std::span<const FeatureGrid> features) {
  loss::HeadOutputs out(features.size());
  std::array<double, kFeatureDim> x{};
  const std::size_t k = model.counter.outputs;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FeatureGrid& f = features[i];
    auto& h = out[i];
    if (model.mode == Mode::Regression) {
      h.counts = Grid(f.height, f.width);
    } else {
      h.class_logits = loss::ClassScores(f.height, f.width, k);
    }
    if (i > 0) {
      h.mask_logits = Grid(f.height, f.width);
      h.up_logits = Grid(f.height, f.width);
    }
    for (std::size_t c = 0; c < f.cells(); ++c) {
      scale_features(model, f.cell(c), x);
      // One parameter block serves every stage.
      if (model.mode == Mode::Regression) {
        model.counter.apply(x, std::span<double>(&h.counts[c], 1));
      } else {
        model.counter.apply(x, h.class_logits.cell(c));
      }
      if (i > 0) {
        model.decider.apply(x, std::span<double>(&h.mask_logits[c], 1));
        model.upsampler.apply(x, std::span<double>(&h.up_logits[c], 1));
      }
    }
  }
  return out;
}

CountGrid inference_counts(const SdcModel& model, const loss::StageHeads& heads) {
  if (model.mode == Mode::Regression) {
    Grid g = heads.counts;
    for (double& v : g.values()) {
      if (!std::isfinite(v)) throw std::runtime_error("non-finite count prediction");
      v = std::clamp(v, 0.0, model.c_max);
    }
    return CountGrid(std::move(g));
  }
  const auto& l = heads.class_logits;
  Grid g(l.height, l.width);
  for (std::size_t c = 0; c < l.cells(); ++c) {
    const auto cell = l.cell(c);
    const auto best = static_cast<std::size_t>(std::max_element(cell.begin(), cell.end()) - cell.begin());
    g[c] = gt::class_to_count(best, *model.partition);
  }
  return CountGrid(std::move(g));
}

engine::SdcTrace forward(const SdcModel& model, std::span<const FeatureGrid> features, int stages) {
  require_levels(features, stages);
  const auto heads = head_outputs(model, features.first(static_cast<std::size_t>(stages) + 1));
  engine::StageModel sm;
  sm.counter = [&](int i) { return inference_counts(model, heads[static_cast<std::size_t>(i)]); };
  sm.decider = [&](int i) {
    Grid w = heads[static_cast<std::size_t>(i)].mask_logits;
    for (double& v : w.values()) v = sigmoid(v);
    return DivisionMask(std::move(w));
  };
  sm.upsampler = [&](int i) { return spatial_softmax2(heads[static_cast<std::size_t>(i)].up_logits); };
  return engine::run(sm, stages);
}

std::vector<Sample> load_samples(const synth::Manifest& manifest, const std::string& split,
                                 int levels, int jobs) {
  const auto entries = manifest.split(split);
  std::vector<Sample> out(entries.size());
  const double sigma = manifest.config.gt_sigma;
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const auto& e = *entries[i];
    const Grid image = io::read_grid(manifest.root / e.image);
    auto points = io::read_points_csv(manifest.root / e.annotations);
    const gt::AnnotationSet ann(std::move(points), image.height(), image.width());
    const auto density = gt::render_density(ann, gt::FixedKernel{sigma});
    out[i].features = extract_pyramid(image, levels);
    out[i].gt = gt::count_pyramid(density, kBasePatch, levels);
    out[i].subregion_counts = e.subregion_counts;
  });
  return out;
}

ParamGradient parameter_gradient(const SdcModel& model, const Sample& sample,
                                 loss::LossBreakdown* loss_out) {
  require_levels(sample.features, model.stages);
  if (sample.gt.size() < static_cast<std::size_t>(model.stages) + 1) {
    throw std::invalid_argument("ground truth for levels 0.." + std::to_string(model.stages) +
                                " required");
  }
  const auto n = static_cast<std::size_t>(model.stages) + 1;
  const auto features = std::span<const FeatureGrid>(sample.features).first(n);
  const auto heads = head_outputs(model, features);
  const auto g = loss::gradients(heads, std::span<const CountGrid>(sample.gt).first(n),
                                 model.counter_spec());
  if (loss_out) *loss_out = g.loss;

  ParamGradient pg;
  pg.counter.assign(model.counter.parameter_count(), 0.0);
  pg.decider.assign(model.decider.parameter_count(), 0.0);
  pg.upsampler.assign(model.upsampler.parameter_count(), 0.0);
  std::array<double, kFeatureDim> x{};
  const std::size_t k = model.counter.outputs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& gi = g.grad[i];
    for (std::size_t c = 0; c < features[i].cells(); ++c) {
      scale_features(model, features[i].cell(c), x);
      if (model.mode == Mode::Regression) {
        accumulate(pg.counter, 1, x, 0, gi.counts[c]);
      } else {
        const auto gl = gi.class_logits.cell(c);
        for (std::size_t o = 0; o < k; ++o) accumulate(pg.counter, k, x, o, gl[o]);
      }
      if (i > 0) {
        accumulate(pg.decider, 1, x, 0, gi.mask_logits[c]);
        accumulate(pg.upsampler, 1, x, 0, gi.up_logits[c]);
      }
    }
  }
  return pg;
}

TrainResult train(SdcModel model, std::span<const Sample> samples, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(cfg.lr > 0.0) || !(cfg.lr_decay > 0.0) || cfg.patience < 1 || !(cfg.min_lr >= 0.0)) {
    throw std::invalid_argument("lr and lr_decay must be positive, min_lr >= 0, patience >= 1");
  }
  TrainResult res;
  if (cfg.epochs > 0 && samples.empty()) throw std::invalid_argument("no training samples");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double lr = cfg.lr;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    double eq = 0.0;
    bool has_eq = false;
    for (std::size_t idx : order) {
      loss::LossBreakdown lb;
      ParamGradient g;
      try {
        g = parameter_gradient(model, samples[idx], &lb);
      } catch (const loss::NonFiniteError& e) {
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", sample " + std::to_string(idx) +
                            ": " + e.what());
      } catch (const std::exception& e) {
        bool finite = true;
        for (double v : model.parameters()) finite = finite && std::isfinite(v);
        if (finite) throw;
        throw NonFiniteLoss("parameters diverged before epoch " + std::to_string(epoch) +
                            ", sample " + std::to_string(idx) + ": " + e.what());
      }
      if (!std::isfinite(lb.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", sample " << idx << " (counter "
            << lb.l_counter << ", merge " << lb.l_merge << ", up " << lb.l_up << ", div "
            << lb.l_div << ")";
        throw NonFiniteLoss(msg.str());
      }
      st.mean.l_counter += lb.l_counter;
      st.mean.l_merge += lb.l_merge;
      st.mean.l_up += lb.l_up;
      st.mean.l_div += lb.l_div;
      st.mean.total += lb.total;
      if (lb.l_eq) {
        eq += *lb.l_eq;
        has_eq = true;
      }
      sgd_step(model.counter, g.counter, lr);
      sgd_step(model.decider, g.decider, lr);
      sgd_step(model.upsampler, g.upsampler, lr);
    }
    const auto m = static_cast<double>(samples.size());
    st.mean.l_counter /= m;
    st.mean.l_merge /= m;
    st.mean.l_up /= m;
    st.mean.l_div /= m;
    st.mean.total /= m;
    if (has_eq) st.mean.l_eq = eq / m;
    res.curve.push_back(st);
    if (on_epoch) on_epoch(st);

    if (st.mean.total < best * (1.0 - cfg.plateau_tolerance)) {
      best = st.mean.total;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      lr *= cfg.lr_decay;
      stale = 0;
      if (lr < cfg.min_lr) break;
    }
  }
  res.model = std::move(model);
  return res;
}

TrainResult train_new(std::span<const Sample> samples, const TrainConfig& cfg,
                      const std::function<void(const EpochStats&)>& on_epoch) {
  SdcModel m = SdcModel::create(cfg.mode, cfg.stages, cfg.c_max, cfg.scheme, cfg.seed, cfg.init_std);
  std::vector<FeatureGrid> level0;
  level0.reserve(samples.size());
  for (const auto& s : samples) level0.push_back(s.features.at(0));
  fit_feature_scale(m, level0);
  return train(std::move(m), samples, cfg, on_epoch);
}

EvalResult evaluate(const SdcModel& model, std::span<const Sample> samples,
                    const EvalOptions& opts, std::span<const Sample> reference) {
  if (samples.empty()) throw std::invalid_argument("no evaluation samples");
  const int n = opts.stages;
  struct PerImage {
    Grid div;
    Grid gt;
    Grid patch_pred;
  };
  std::vector<PerImage> per(samples.size());
  parallel_for(samples.size(), opts.jobs, [&](std::size_t s) {
    const Sample& smp = samples[s];
    require_levels(smp.features, n);
    if (smp.gt.size() < static_cast<std::size_t>(n) + 1) {
      throw std::invalid_argument("ground truth pyramid is shallower than the requested stages");
    }
    engine::SdcTrace trace;
    if (opts.oracle) {
      const auto heads =
          head_outputs(model, std::span<const FeatureGrid>(smp.features).first(static_cast<std::size_t>(n) + 1));
      engine::StageModel sm;
      sm.counter = [&](int i) { return smp.gt[static_cast<std::size_t>(i)]; };
      sm.decider = [&](int i) {
        Grid w = heads[static_cast<std::size_t>(i)].mask_logits;
        for (double& v : w.values()) v = sigmoid(v);
        return DivisionMask(std::move(w));
      };
      sm.upsampler = [&](int i) {
        return gt::gt_upsampling_map(smp.gt[static_cast<std::size_t>(i) - 1],
                                     smp.gt[static_cast<std::size_t>(i)]);
      };
      trace = engine::run(sm, n);
    } else {
      trace = forward(model, smp.features, n);
    }
    PerImage& p = per[s];
    p.div = trace.divs.back().grid();
    p.gt = smp.gt[static_cast<std::size_t>(n)].grid();
    p.patch_pred = p.div;
    for (int i = 0; i < n; ++i) p.patch_pred = block_sum2(p.patch_pred);
  });

  EvalResult r;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    r.image_preds.push_back(per[s].div.sum());
    r.image_gts.push_back(per[s].gt.sum());
    const auto pp = per[s].patch_pred.values();
    const auto pg = samples[s].gt[0].grid().values();
    r.patch_preds.insert(r.patch_preds.end(), pp.begin(), pp.end());
    r.patch_gts.insert(r.patch_gts.end(), pg.begin(), pg.end());
  }
  EvalReport& rep = r.report;
  rep.images = samples.size();
  rep.mae = metrics::mae(r.image_preds, r.image_gts);
  rep.mse = metrics::mse(r.image_preds, r.image_gts);
  if (std::all_of(r.image_gts.begin(), r.image_gts.end(), [](double g) { return g > 0.0; })) {
    rep.rmae = metrics::rmae(r.image_preds, r.image_gts);
  }
  const std::size_t h = per.front().gt.height();
  const std::size_t w = per.front().gt.width();
  for (int level = 0; level <= 2; ++level) {
    const std::size_t k = std::size_t{1} << level;
    if (h % k != 0 || w % k != 0) break;
    double total = 0.0;
    for (const auto& p : per) total += metrics::game(p.div, p.gt, level);
    rep.game.emplace_back(level, total / static_cast<double>(per.size()));
  }
  rep.patch_mae = metrics::mae(r.patch_preds, r.patch_gts);
  r.bins = metrics::bin_curves(r.patch_preds, r.patch_gts, opts.bin_width);

  if (!reference.empty()) {
    const auto closed = pooled(reference, 0);
    const auto open = pooled(samples, 0);
    const auto divided = pooled(samples, 1);
    if (!closed.empty() && !open.empty() && !divided.empty()) {
      const double hi = std::max({*std::max_element(closed.begin(), closed.end()),
                                  *std::max_element(open.begin(), open.end())});
      const auto bins = static_cast<std::size_t>(std::floor(hi / opts.bin_width)) + 1;
      const auto h_closed = theory::count_histogram(closed, opts.bin_width, bins);
      rep.js_without_division =
          theory::js_divergence(h_closed, theory::count_histogram(open, opts.bin_width, bins));
      rep.js_with_division =
          theory::js_divergence(h_closed, theory::count_histogram(divided, opts.bin_width, bins));
    }
  }
  return r;
}

double range_mae(const EvalResult& r, double lo, double hi) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < r.patch_gts.size(); ++i) {
    if (r.patch_gts[i] >= lo && r.patch_gts[i] < hi) {
      s += std::abs(r.patch_preds[i] - r.patch_gts[i]);
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("no patches with ground truth in the requested range");
  return s / static_cast<double>(n);
}

std::string_view mode_name(Mode mode) { return mode == Mode::Regression ? "reg" : "cls"; }

Mode parse_mode(std::string_view name) {
  if (name == "reg") return Mode::Regression;
  if (name == "cls") return Mode::Classification;
  throw std::invalid_argument("mode must be reg or cls, got '" + std::string(name) + "'");
}

void save_checkpoint(const std::filesystem::path& path, const SdcModel& model) {
  nlohmann::ordered_json h;
  h["format"] = "sdc-toymodel";
  h["version"] = 1;
  h["mode"] = mode_name(model.mode);
  h["stages"] = model.stages;
  h["c_max"] = model.c_max;
  h["scheme"] = gt::scheme_name(model.scheme);
  h["feature_dim"] = kFeatureDim;
  h["counter_outputs"] = model.counter.outputs;
  h["parameters"] = model.parameter_count();
  h["layout"] = {"feature_scale", "counter.w", "counter.b", "decider.w", "decider.b",
                 "upsampler.w", "upsampler.b"};

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::IoError("cannot write " + path.string());
  os << h.dump() << '\n';
  for (double v : model.feature_scale) io::write_f64_le(os, v);
  for (double v : model.parameters()) io::write_f64_le(os, v);
  if (!os) throw io::IoError("write failed: " + path.string());
}

SdcModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::IoError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(is, line);
  SdcModel m;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.at("format").get<std::string>() != "sdc-toymodel" || h.at("version").get<int>() != 1) {
      throw io::FormatError("not a version-1 sdc-toymodel checkpoint: " + path.string());
    }
    if (h.at("feature_dim").get<std::size_t>() != kFeatureDim) {
      throw io::FormatError("checkpoint feature dimension mismatch");
    }
    m = SdcModel::create(parse_mode(h.at("mode").get<std::string>()), h.at("stages").get<int>(),
                         h.at("c_max").get<double>(),
                         gt::parse_scheme(h.at("scheme").get<std::string>()), 0, 0.0);
    if (h.at("counter_outputs").get<std::size_t>() != m.counter.outputs ||
        h.at("parameters").get<std::size_t>() != m.parameter_count()) {
      throw io::FormatError("checkpoint head sizes do not match its partition");
    }
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError("bad checkpoint header in " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw io::FormatError("bad checkpoint header in " + path.string() + ": " + e.what());
  }
  try {
    for (double& v : m.feature_scale) v = io::read_f64_le(is);
    std::vector<double> p(m.parameter_count());
    for (double& v : p) v = io::read_f64_le(is);
    m.set_parameters(p);
  } catch (const io::IoError&) {
    throw io::FormatError("truncated checkpoint " + path.string());
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw io::FormatError("trailing bytes in checkpoint " + path.string());
  }
  return m;
}

void write_loss_curve(const std::filesystem::path& path, std::span<const EpochStats> curve) {
  std::string out = "epoch,lr,l_counter,l_merge,l_up,l_div,l_eq,total\n";
  for (const auto& e : curve) {
    out += std::to_string(e.epoch) + ',' + io::format_double(e.lr) + ',' +
           io::format_double(e.mean.l_counter) + ',' + io::format_double(e.mean.l_merge) + ',' +
           io::format_double(e.mean.l_up) + ',' + io::format_double(e.mean.l_div) + ',' +
           (e.mean.l_eq ? io::format_double(*e.mean.l_eq) : std::string()) + ',' +
           io::format_double(e.mean.total) + '\n';
  }
  io::write_text(path, out);
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::string out = "metric,name,value\n";
  auto row = [&](std::string_view metric, std::string_view name, const std::string& value) {
    out.append(metric).append(",").append(name).append(",").append(value).append("\n");
  };
  row("images", "count", std::to_string(report.images));
  row("mae", "image", io::format_double(report.mae));
  row("mse", "image", io::format_double(report.mse));
  if (report.rmae) row("rmae", "image", io::format_double(*report.rmae));
  for (const auto& [level, v] : report.game) row("game", "L" + std::to_string(level), io::format_double(v));
  row("mae", "patch", io::format_double(report.patch_mae));
  if (report.js_without_division) {
    row("js", "without_division", io::format_double(*report.js_without_division));
  }
  if (report.js_with_division) row("js", "with_division", io::format_double(*report.js_with_division));
  io::write_text(path, out);
}

void write_bins_csv(const std::filesystem::path& path, std::span<const metrics::BinRow> bins) {
  std::string out = "bin_lo,bin_hi,n,mae,rmae\n";
  for (const auto& b : bins) {
    out += io::format_double(b.lo) + ',' + io::format_double(b.hi) + ',' + std::to_string(b.n) +
           ',' + io::format_double(b.mae) + ',' + (b.rmae ? io::format_double(*b.rmae) : "") + '\n';
  }
  io::write_text(path, out);
}

}  // namespace sdc::toy
