#pragma once

// Desk-scale S-DC counter: fixed pooled patch features feeding three linear
// heads (closed-set counter, division decider, upsampler) shared across all
// stages, trained end to end through the merge with SGD.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdc/engine.hpp"
#include "sdc/grid.hpp"
#include "sdc/groundtruth.hpp"
#include "sdc/losses.hpp"
#include "sdc/metrics.hpp"
#include "sdc/synthcells.hpp"

namespace sdc::toy {

inline constexpr std::size_t kFeatureDim = 19;
inline constexpr std::size_t kBasePatch = 64;
inline constexpr double kMaximaThreshold = 0.3;
inline constexpr int kMaxLevel = 4;  // 4 px patches, 1 px pooling bins

/// One 19-vector per patch, cell-major.
///   [0, 16)  4x4 grid of pooled intensity sums
///   16       total intensity
///   17       maximum intensity
///   18       strict 8-neighbourhood maxima above kMaximaThreshold
struct FeatureGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  std::size_t cells() const noexcept { return height * width; }
  std::span<const double> cell(std::size_t i) const {
    return std::span<const double>(values).subspan(i * kFeatureDim, kFeatureDim);
  }
};

/// Features of every (64 / 2^level)-pixel patch. Image sides must be
/// multiples of 64.
FeatureGrid extract_features(const Grid& image, int level);
/// Levels 0..levels, sharing one local-maxima pass.
std::vector<FeatureGrid> extract_pyramid(const Grid& image, int levels);

struct LinearHead {
  std::size_t outputs = 0;
  std::vector<double> weights;  // outputs x kFeatureDim, row-major
  std::vector<double> bias;     // outputs

  explicit LinearHead(std::size_t n_out = 0)
      : outputs(n_out), weights(n_out * kFeatureDim, 0.0), bias(n_out, 0.0) {}
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
  void apply(std::span<const double> x, std::span<double> out) const;
};

struct SdcModel {
  loss::Mode mode = loss::Mode::Regression;
  int stages = 1;
  double c_max = 10.0;
  gt::PartitionScheme scheme = gt::PartitionScheme::OneLinear;
  std::optional<gt::IntervalPartition> partition;  // classification only
  std::array<double, kFeatureDim> feature_scale{};  // features are divided by these
  LinearHead counter;
  LinearHead decider;
  LinearHead upsampler;

  /// Heads initialized from N(0, init_std^2) with zero biases; init_std = 0
  /// gives an all-zero model. Feature scales start at 1.
  static SdcModel create(loss::Mode mode, int stages, double c_max, gt::PartitionScheme scheme,
                         std::uint64_t init_seed, double init_std = 0.01);

  loss::CounterSpec counter_spec() const;
  std::size_t parameter_count() const noexcept;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> p);
};

/// Scales each feature by its root mean square over the given level-0 grids.
void fit_feature_scale(SdcModel& model, std::span<const FeatureGrid> level0);

/// Raw head outputs for stages 0..features.size()-1.
loss::HeadOutputs head_outputs(const SdcModel& model, std::span<const FeatureGrid> features);

/// Inference counts: clamp to [0, c_max] (regression) or argmax class value
/// (classification).
CountGrid inference_counts(const SdcModel& model, const loss::StageHeads& heads);

/// Inference through the S-DC engine with `stages` divisions; needs features
/// for levels 0..stages.
engine::SdcTrace forward(const SdcModel& model, std::span<const FeatureGrid> features, int stages);

// Training.

struct Sample {
  std::vector<FeatureGrid> features;  // levels 0..L
  std::vector<CountGrid> gt;          // ground-truth counts, levels 0..L
  std::vector<int> subregion_counts;  // placement counts from the generator
};

/// Loads images and annotations of one split and builds features and
/// ground-truth pyramids for levels 0..levels.
std::vector<Sample> load_samples(const synth::Manifest& manifest, const std::string& split,
                                 int levels, int jobs = 1);

struct TrainConfig {
  loss::Mode mode = loss::Mode::Regression;
  int stages = 1;
  double c_max = 10.0;
  gt::PartitionScheme scheme = gt::PartitionScheme::OneLinear;
  double lr = 1e-2;
  int epochs = 100;
  double lr_decay = 0.1;
  int patience = 5;
  /// Training stops early once a decay takes the learning rate below this.
  double min_lr = 1e-6;
  /// Relative improvement of the epoch mean loss that resets the plateau counter.
  double plateau_tolerance = 1e-3;
  double init_std = 0.01;
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  loss::LossBreakdown mean;
};

struct TrainResult {
  SdcModel model;
  std::vector<EpochStats> curve;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Accumulates d total / d parameters for one sample.
struct ParamGradient {
  std::vector<double> counter;
  std::vector<double> decider;
  std::vector<double> upsampler;
};
ParamGradient parameter_gradient(const SdcModel& model, const Sample& sample,
                                 loss::LossBreakdown* loss_out = nullptr);

/// Batch-size-1 SGD over the samples in a seeded shuffled order; the learning
/// rate is multiplied by lr_decay when the epoch mean loss has not improved
/// for `patience` epochs, and training ends once it drops below min_lr.
/// Throws NonFiniteLoss on a non-finite loss.
TrainResult train(SdcModel model, std::span<const Sample> samples, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

/// Fresh model + feature scaling + train.
TrainResult train_new(std::span<const Sample> samples, const TrainConfig& cfg,
                      const std::function<void(const EpochStats&)>& on_epoch = {});

// Evaluation.

struct EvalReport {
  std::size_t images = 0;
  double mae = 0.0;
  double mse = 0.0;
  std::optional<double> rmae;
  std::vector<std::pair<int, double>> game;  // (L, mean GAME(L))
  double patch_mae = 0.0;
  std::optional<double> js_without_division;
  std::optional<double> js_with_division;
};

struct EvalResult {
  EvalReport report;
  std::vector<double> image_preds;
  std::vector<double> image_gts;
  std::vector<double> patch_preds;  // per base (64 px) patch
  std::vector<double> patch_gts;
  std::vector<metrics::BinRow> bins;
};

struct EvalOptions {
  int stages = 0;
  /// Replace the counter with ground-truth counts and the upsampler with U^gt.
  bool oracle = false;
  double bin_width = 1.0;
  int jobs = 1;
};

/// `reference` (typically the training split) enables the Jensen-Shannon
/// comparison of base-patch count distributions with and without division.
EvalResult evaluate(const SdcModel& model, std::span<const Sample> samples,
                    const EvalOptions& opts, std::span<const Sample> reference = {});

/// Pooled MAE of patches whose ground truth lies in [lo, hi).
double range_mae(const EvalResult& r, double lo, double hi);

// Persistence.

void save_checkpoint(const std::filesystem::path& path, const SdcModel& model);
SdcModel load_checkpoint(const std::filesystem::path& path);
void write_loss_curve(const std::filesystem::path& path, std::span<const EpochStats> curve);
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
void write_bins_csv(const std::filesystem::path& path, std::span<const metrics::BinRow> bins);

std::string_view mode_name(loss::Mode mode);
loss::Mode parse_mode(std::string_view name);

}  // namespace sdc::toy
