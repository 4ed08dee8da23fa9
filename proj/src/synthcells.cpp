#include "sdc/synthcells.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "sdc/parallel.hpp"

namespace sdc::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double uniform_in(std::mt19937_64& rng, double lo, double width) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double v = lo + width * u(rng);
  // Keep the open upper edge open even under rounding.
  return std::min(v, std::nextafter(lo + width, lo));
}

constexpr int kPlacementAttempts = 50;

std::string image_name(int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%04d.%s", index, ext);
  return buf;
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                    const char* where) {
  if (!j.is_object()) {
    throw std::invalid_argument(std::string(where) + " must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) ==
        known.end()) {
      throw std::invalid_argument(std::string("unknown key '") + key + "' in " + where);
    }
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (n_images < 0) throw std::invalid_argument("n_images must be >= 0");
  if (image_size <= 0 || subregion <= 0 || image_size % subregion != 0) {
    throw std::invalid_argument("image_size must be a positive multiple of subregion");
  }
  if (count_lo < 0 || count_hi < count_lo) {
    throw std::invalid_argument("count range must satisfy 0 <= lo <= hi");
  }
  if (!(blob.sigma > 0.0) || !(blob.peak > 0.0) || blob.min_separation < 0.0) {
    throw std::invalid_argument("blob sigma and peak must be positive");
  }
}

std::uint64_t image_seed(std::uint64_t split_seed, std::uint64_t index) {
  return splitmix64(splitmix64(split_seed) ^ index);
}

SynthImage gen_image(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count_law(spec.count_lo, spec.count_hi);
  const int per_side = spec.image_size / spec.subregion;
  const double sub = static_cast<double>(spec.subregion);
  const double min_sep2 = spec.blob.min_separation * spec.blob.min_separation;

  SynthImage out;
  out.image = Grid(static_cast<std::size_t>(spec.image_size),
                   static_cast<std::size_t>(spec.image_size));
  for (int sr = 0; sr < per_side; ++sr) {
    for (int sc = 0; sc < per_side; ++sc) {
      const int n = count_law(rng);
      out.subregion_counts.push_back(n);
      const double x0 = sc * sub;
      const double y0 = sr * sub;
      for (int k = 0; k < n; ++k) {
        io::Point p;
        for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
          p = {uniform_in(rng, x0, sub), uniform_in(rng, y0, sub)};
          const bool clear = std::none_of(out.points.begin(), out.points.end(), [&](const auto& q) {
            const double dx = q.x - p.x;
            const double dy = q.y - p.y;
            return dx * dx + dy * dy < min_sep2;
          });
          if (clear) break;
        }
        out.points.push_back(p);
      }
    }
  }

  const long size = spec.image_size;
  const double sigma = spec.blob.sigma;
  const long radius = static_cast<long>(std::ceil(4.0 * sigma));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (const auto& p : out.points) {
    const long cx = static_cast<long>(std::floor(p.x));
    const long cy = static_cast<long>(std::floor(p.y));
    for (long r = std::max(0L, cy - radius); r <= std::min(size - 1, cy + radius); ++r) {
      const double dy = static_cast<double>(r) + 0.5 - p.y;
      for (long c = std::max(0L, cx - radius); c <= std::min(size - 1, cx + radius); ++c) {
        const double dx = static_cast<double>(c) + 0.5 - p.x;
        out.image(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) +=
            spec.blob.peak * std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  for (double& v : out.image.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

DatasetConfig DatasetConfig::defaults() {
  DatasetConfig cfg;
  cfg.train.n_images = 500;
  cfg.train.count_lo = 0;
  cfg.train.count_hi = 10;
  cfg.train.seed = 1;
  cfg.test.n_images = 500;
  cfg.test.count_lo = 0;
  cfg.test.count_hi = 20;
  cfg.test.seed = 2;
  return cfg;
}

nlohmann::json to_json(const SynthSpec& spec) {
  return {{"n_images", spec.n_images},
          {"image_size", spec.image_size},
          {"subregion", spec.subregion},
          {"count_lo", spec.count_lo},
          {"count_hi", spec.count_hi},
          {"blob_sigma", spec.blob.sigma},
          {"blob_peak", spec.blob.peak},
          {"min_separation", spec.blob.min_separation},
          {"seed", spec.seed}};
}

SynthSpec spec_from_json(const nlohmann::json& j, const SynthSpec& fallback) {
  reject_unknown(j,
                 {"n_images", "image_size", "subregion", "count_lo", "count_hi", "blob_sigma",
                  "blob_peak", "min_separation", "seed"},
                 "split spec");
  SynthSpec s = fallback;
  read_if(j, "n_images", s.n_images);
  read_if(j, "image_size", s.image_size);
  read_if(j, "subregion", s.subregion);
  read_if(j, "count_lo", s.count_lo);
  read_if(j, "count_hi", s.count_hi);
  read_if(j, "blob_sigma", s.blob.sigma);
  read_if(j, "blob_peak", s.blob.peak);
  read_if(j, "min_separation", s.blob.min_separation);
  read_if(j, "seed", s.seed);
  s.validate();
  return s;
}

nlohmann::json to_json(const DatasetConfig& cfg) {
  return {{"train", to_json(cfg.train)}, {"test", to_json(cfg.test)}, {"gt_sigma", cfg.gt_sigma}};
}

DatasetConfig config_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"train", "test", "gt_sigma"}, "dataset config");
  DatasetConfig cfg = DatasetConfig::defaults();
  try {
    if (j.contains("train")) cfg.train = spec_from_json(j.at("train"), cfg.train);
    if (j.contains("test")) cfg.test = spec_from_json(j.at("test"), cfg.test);
    read_if(j, "gt_sigma", cfg.gt_sigma);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad dataset config: ") + e.what());
  }
  if (!(cfg.gt_sigma > 0.0)) throw std::invalid_argument("gt_sigma must be positive");
  if (cfg.train.image_size != cfg.test.image_size || cfg.train.subregion != cfg.test.subregion) {
    throw std::invalid_argument("train and test splits must share image and sub-region size");
  }
  return cfg;
}

std::vector<const ManifestEntry*> Manifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

std::filesystem::path gen_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                                  int jobs) {
  cfg.train.validate();
  cfg.test.validate();
  std::vector<ManifestEntry> entries;
  for (const auto* split : {"train", "test"}) {
    const SynthSpec& spec = std::string(split) == "train" ? cfg.train : cfg.test;
    const std::size_t first = entries.size();
    for (int i = 0; i < spec.n_images; ++i) {
      ManifestEntry e;
      e.split = split;
      e.image = std::string(split) + "/" + image_name(i, "grid");
      e.annotations = std::string(split) + "/" + image_name(i, "csv");
      e.seed = image_seed(spec.seed, static_cast<std::uint64_t>(i));
      entries.push_back(std::move(e));
    }
    parallel_for(static_cast<std::size_t>(spec.n_images), jobs, [&](std::size_t i) {
      auto& e = entries[first + i];
      const SynthImage img = gen_image(spec, e.seed);
      io::write_grid(out_dir / e.image, img.image);
      io::write_points_csv(out_dir / e.annotations, img.points);
      e.subregion_counts = img.subregion_counts;
    });
  }

  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    j["entries"].push_back({{"split", e.split},
                            {"image", e.image},
                            {"annotations", e.annotations},
                            {"seed", e.seed},
                            {"subregion_counts", e.subregion_counts}});
  }
  const auto path = out_dir / "manifest.json";
  io::write_text(path, j.dump(1) + "\n");
  return path;
}

Manifest read_manifest(const std::filesystem::path& manifest_path) {
  Manifest m;
  m.root = manifest_path.parent_path();
  try {
    const auto j = nlohmann::json::parse(io::read_text(manifest_path));
    m.config = config_from_json(j.at("config"));
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.split = je.at("split").get<std::string>();
      e.image = je.at("image").get<std::string>();
      e.annotations = je.at("annotations").get<std::string>();
      e.seed = je.at("seed").get<std::uint64_t>();
      e.subregion_counts = je.at("subregion_counts").get<std::vector<int>>();
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError("bad manifest " + manifest_path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace sdc::synth
