#pragma once

// Synthetic cell-counting images with controlled per-sub-region counts.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdc/grid.hpp"
#include "sdc/io.hpp"

namespace sdc::synth {

struct BlobStyle {
  double sigma = 3.0;
  double peak = 0.8;
  double min_separation = 4.0;
};

struct SynthSpec {
  int n_images = 500;
  int image_size = 256;
  int subregion = 64;
  int count_lo = 0;
  int count_hi = 10;
  BlobStyle blob;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthImage {
  Grid image;                          // intensities in [0, 1]
  std::vector<io::Point> points;       // cell centres
  std::vector<int> subregion_counts;   // row-major over sub-regions
};

/// Per-image seed derived from the split seed and the image index.
std::uint64_t image_seed(std::uint64_t split_seed, std::uint64_t index);

/// Draws a count per sub-region, places centres uniformly inside it (rejecting
/// candidates closer than min_separation for a bounded number of attempts,
/// then accepting overlap) and renders Gaussian blobs clipped to [0, 1].
SynthImage gen_image(const SynthSpec& spec, std::uint64_t seed);

struct DatasetConfig {
  SynthSpec train;
  SynthSpec test;
  /// Fixed Gaussian width of the ground-truth density maps.
  double gt_sigma = 2.0;

  static DatasetConfig defaults();
};

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec spec_from_json(const nlohmann::json& j, const SynthSpec& fallback);
nlohmann::json to_json(const DatasetConfig& cfg);
/// Missing keys keep their defaults; unknown keys and bad values throw.
DatasetConfig config_from_json(const nlohmann::json& j);

struct ManifestEntry {
  std::string split;
  std::string image;        // relative to the manifest directory
  std::string annotations;  // relative to the manifest directory
  std::uint64_t seed = 0;
  std::vector<int> subregion_counts;
};

struct Manifest {
  std::filesystem::path root;  // directory holding manifest.json
  DatasetConfig config;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const;
};

/// Writes <out>/<split>/img_NNNN.grid and .csv for both splits plus
/// <out>/manifest.json. Returns the manifest path.
std::filesystem::path gen_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                                  int jobs = 1);

Manifest read_manifest(const std::filesystem::path& manifest_path);

}  // namespace sdc::synth
