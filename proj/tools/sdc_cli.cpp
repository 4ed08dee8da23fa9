// sdc: synthetic data generation, training, evaluation and theory checks for
// spatial divide-and-conquer counting.
//
// Exit codes: 0 ok, 1 internal error, 2 bad configuration or arguments,
// 3 I/O failure, 4 non-finite training loss, 5 violated bound.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdc/io.hpp"
#include "sdc/parallel.hpp"
#include "sdc/synthcells.hpp"
#include "sdc/theory.hpp"
#include "sdc/toymodel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kIo = 3, kNonFinite = 4, kViolation = 5 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> seed_from(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("SDC_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("SDC_SEED is not an unsigned integer: ") + env);
    }
  }
  return std::nullopt;
}

json load_json(const fs::path& path) {
  std::string text;
  try {
    text = sdc::io::read_text(path);
  } catch (const sdc::io::IoError& e) {
    throw ConfigError(e.what());
  }
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// gen-data

struct GenArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  bool print_default = false;
};

int run_gen(const GenArgs& a) {
  if (a.print_default) {
    std::cout << sdc::synth::to_json(sdc::synth::DatasetConfig::defaults()).dump(2) << '\n';
    return kOk;
  }
  if (a.out.empty()) throw ConfigError("--out is required");
  sdc::synth::DatasetConfig cfg = sdc::synth::DatasetConfig::defaults();
  if (!a.config.empty()) {
    try {
      cfg = sdc::synth::config_from_json(load_json(a.config));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (const auto s = seed_from(a.seed)) {
    cfg.train.seed = *s;
    cfg.test.seed = *s + 1;
  }
  const auto manifest = sdc::synth::gen_dataset(cfg, a.out, a.jobs);
  std::cout << manifest.string() << '\n';
  return kOk;
}

// train

json to_json(const sdc::toy::TrainConfig& c) {
  return {{"mode", sdc::toy::mode_name(c.mode)},
          {"stages", c.stages},
          {"c_max", c.c_max},
          {"scheme", sdc::gt::scheme_name(c.scheme)},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"lr_decay", c.lr_decay},
          {"patience", c.patience},
          {"min_lr", c.min_lr},
          {"plateau_tolerance", c.plateau_tolerance},
          {"init_std", c.init_std},
          {"seed", c.seed}};
}

sdc::toy::TrainConfig train_config_from_json(const json& j) {
  static const char* known[] = {"mode",   "stages",   "c_max",    "scheme",
                                "lr",     "epochs",   "lr_decay", "patience", "min_lr",
                                "plateau_tolerance", "init_std", "seed"};
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError("unknown key '" + key + "' in train config");
    }
  }
  sdc::toy::TrainConfig c;
  try {
    if (j.contains("mode")) c.mode = sdc::toy::parse_mode(j.at("mode").get<std::string>());
    if (j.contains("scheme")) c.scheme = sdc::gt::parse_scheme(j.at("scheme").get<std::string>());
    if (j.contains("stages")) c.stages = j.at("stages").get<int>();
    if (j.contains("c_max")) c.c_max = j.at("c_max").get<double>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("lr_decay")) c.lr_decay = j.at("lr_decay").get<double>();
    if (j.contains("patience")) c.patience = j.at("patience").get<int>();
    if (j.contains("min_lr")) c.min_lr = j.at("min_lr").get<double>();
    if (j.contains("plateau_tolerance")) c.plateau_tolerance = j.at("plateau_tolerance").get<double>();
    if (j.contains("init_std")) c.init_std = j.at("init_std").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::optional<std::string> mode;
  std::optional<int> stages;
  std::optional<double> cmax;
  std::optional<std::string> scheme;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string curve;
  int jobs = 0;
  bool progress = false;
  bool print_default = false;
};

int run_train(const TrainArgs& a) {
  if (a.print_default) {
    std::cout << to_json(sdc::toy::TrainConfig{}).dump(2) << '\n';
    return kOk;
  }
  if (a.data.empty() || a.out.empty()) throw ConfigError("--data and --out are required");
  sdc::toy::TrainConfig cfg;
  if (!a.config.empty()) cfg = train_config_from_json(load_json(a.config));
  try {
    if (a.mode) cfg.mode = sdc::toy::parse_mode(*a.mode);
    if (a.scheme) cfg.scheme = sdc::gt::parse_scheme(*a.scheme);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (a.stages) cfg.stages = *a.stages;
  if (a.cmax) cfg.c_max = *a.cmax;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.lr) cfg.lr = *a.lr;
  if (const auto s = seed_from(a.seed)) cfg.seed = *s;
  if (cfg.stages < 0 || cfg.stages > sdc::toy::kMaxLevel || !(cfg.c_max > 0.0) ||
      cfg.epochs < 0 || !(cfg.lr > 0.0) || !(cfg.lr_decay > 0.0) || cfg.patience < 1 || !(cfg.min_lr >= 0.0)) {
    throw ConfigError("train config out of range: " + to_json(cfg).dump());
  }

  const auto manifest = sdc::synth::read_manifest(a.data);
  const auto samples = sdc::toy::load_samples(manifest, "train", cfg.stages, a.jobs);
  std::function<void(const sdc::toy::EpochStats&)> report;
  if (a.progress) {
    report = [](const sdc::toy::EpochStats& e) {
      std::cerr << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.mean.total << '\n';
    };
  }
  const auto result = sdc::toy::train_new(samples, cfg, report);
  sdc::toy::save_checkpoint(a.out, result.model);
  const fs::path curve = a.curve.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.curve);
  sdc::toy::write_loss_curve(curve, result.curve);
  std::cout << a.out << '\n';
  return kOk;
}

// eval

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::optional<int> stages;
  std::string split = "test";
  std::string reference = "train";
  std::string out;
  double bin_width = 1.0;
  bool oracle = false;
  int jobs = 0;
};

int run_eval(const EvalArgs& a) {
  if (a.ckpt.empty() || a.data.empty() || a.out.empty()) {
    throw ConfigError("--ckpt, --data and --out are required");
  }
  if (!fs::exists(a.ckpt)) throw sdc::io::IoError("missing checkpoint " + a.ckpt);
  if (!fs::exists(a.data)) throw sdc::io::IoError("missing manifest " + a.data);
  if (!(a.bin_width > 0.0)) throw ConfigError("--bin-width must be positive");
  const auto model = sdc::toy::load_checkpoint(a.ckpt);
  const int stages = a.stages.value_or(model.stages);
  if (stages < 0 || stages > sdc::toy::kMaxLevel) throw ConfigError("--stages out of range");
  if (stages != model.stages) {
    std::cerr << "warning: checkpoint was trained with " << model.stages
              << " stage(s); evaluating with " << stages << '\n';
  }
  const auto manifest = sdc::synth::read_manifest(a.data);
  if (manifest.split(a.split).empty()) throw ConfigError("split '" + a.split + "' has no images");
  const int levels = std::max(stages, 1);
  const auto samples = sdc::toy::load_samples(manifest, a.split, levels, a.jobs);
  std::vector<sdc::toy::Sample> reference;
  if (!a.reference.empty()) reference = sdc::toy::load_samples(manifest, a.reference, 0, a.jobs);

  sdc::toy::EvalOptions opts;
  opts.stages = stages;
  opts.oracle = a.oracle;
  opts.bin_width = a.bin_width;
  opts.jobs = a.jobs;
  const auto r = sdc::toy::evaluate(model, samples, opts, reference);
  const fs::path out(a.out);
  sdc::toy::write_report_csv(out / "report.csv", r.report);
  sdc::toy::write_bins_csv(out / "bins.csv", r.bins);
  std::cout << "mae " << sdc::io::format_double(r.report.mae) << " mse "
            << sdc::io::format_double(r.report.mse) << '\n';
  return kOk;
}

// verify-theory

struct TheoryArgs {
  std::int64_t trials = 100000;
  int instances = 1000;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 0;
  bool inject_fault = false;
};

int run_theory(const TheoryArgs& a) {
  if (a.out.empty()) throw ConfigError("--out is required");
  if (a.trials < 2 || a.instances < 0) throw ConfigError("--trials >= 2 and --instances >= 0 required");
  const std::uint64_t seed = seed_from(a.seed).value_or(0);
  namespace th = sdc::theory;
  bool ok = true;

  const auto rows = th::prop1_sweep(a.instances, seed);
  std::string csv = "id,n_min,oracle,n_max,total,c_max,region_side\n";
  int violations = 0;
  for (const auto& r : rows) {
    csv += std::to_string(r.id) + ',' + std::to_string(r.bounds.n_min) + ',' +
           std::to_string(r.oracle) + ',' + std::to_string(r.bounds.n_max) + ',' +
           sdc::io::format_double(r.total) + ',' + sdc::io::format_double(r.c_max) + ',' +
           std::to_string(r.region_side) + '\n';
    if (!r.holds()) ++violations;
  }
  const fs::path out(a.out);
  sdc::io::write_text(out / "prop1.csv", csv);
  ok = ok && violations == 0;

  json summary;
  summary["prop1"] = {{"instances", rows.size()},
                      {"violations", violations},
                      {"seed", seed},
                      {"example", {{"c_star", 136.5}, {"c_max", 22.0},
                                   {"n_min", th::min_divisions(136.5, 22.0)}}}};

  const double c_max = 10.0;
  const th::SplitInstance split({10.0, 10.0}, c_max);
  const th::ErrorProfile profile = a.inject_fault ? th::ErrorProfile({0.0, 1000.0}, {0.1, 0.1})
                                                  : th::ErrorProfile({0.0, 1000.0}, {0.0, 10.0});
  json p2 = {{"c_star", split.total()}, {"c_max", c_max}, {"parts", {10.0, 10.0}},
             {"trials", a.trials}, {"seed", seed}};
  try {
    const auto rep = th::mc_verify_prop2(profile, split, a.trials, seed, a.jobs);
    p2["emp_open"] = rep.emp_open;
    p2["emp_closed"] = rep.emp_closed;
    p2["bound"] = rep.bound;
    p2["se_open"] = rep.se_open;
    p2["se_closed"] = rep.se_closed;
    p2["closed_within_bound"] = rep.closed_within_bound;
    p2["bound_below_open"] = rep.bound_below_open;
    p2["closed_below_open"] = rep.closed_below_open;
    p2["holds"] = rep.holds();
    ok = ok && rep.holds();
  } catch (const th::PreconditionError& e) {
    p2["holds"] = false;
    p2["error"] = e.what();
    ok = false;
  }
  summary["prop2"] = p2;
  summary["ok"] = ok;
  sdc::io::write_text(out / "theory.json", summary.dump(2) + "\n");
  std::cout << (ok ? "all bounds hold" : "bound violated") << '\n';
  return ok ? kOk : kViolation;
}

template <class Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const sdc::toy::NonFiniteLoss& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kNonFinite;
  } catch (const sdc::io::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial divide-and-conquer counting toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate the synthetic cell dataset");
  g->add_option("--config", gen.config, "Dataset config JSON");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--seed", gen.seed, "Seed for both splits (falls back to SDC_SEED)");
  g->add_option("--jobs", gen.jobs, "Worker threads, 0 = all cores");
  g->add_flag("--print-default-config", gen.print_default, "Print the default config and exit");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a counter with optional S-DC stages");
  t->add_option("--config", tr.config, "Training config JSON");
  t->add_option("--data", tr.data, "Dataset manifest");
  t->add_option("--mode", tr.mode, "reg or cls");
  t->add_option("--stages", tr.stages, "Number of S-DC divisions (0 = baseline)");
  t->add_option("--cmax", tr.cmax, "Closed-set count bound");
  t->add_option("--scheme", tr.scheme, "Interval partition: one-linear or two-linear");
  t->add_option("--epochs", tr.epochs, "Training epochs");
  t->add_option("--lr", tr.lr, "Initial learning rate");
  t->add_option("--seed", tr.seed, "Initialization and shuffling seed (falls back to SDC_SEED)");
  t->add_option("--out", tr.out, "Checkpoint path");
  t->add_option("--curve", tr.curve, "Loss-curve CSV (default <out>.loss.csv)");
  t->add_option("--jobs", tr.jobs, "Worker threads for data loading, 0 = all cores");
  t->add_flag("--progress", tr.progress, "Print per-epoch loss to stderr");
  t->add_flag("--print-default-config", tr.print_default, "Print the default config and exit");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint path");
  e->add_option("--data", ev.data, "Dataset manifest");
  e->add_option("--stages", ev.stages, "S-DC divisions at inference (default: checkpoint's)");
  e->add_option("--split", ev.split, "Split to evaluate");
  e->add_option("--reference-split", ev.reference,
                "Split whose count distribution is the closed set for the JS rows ('' disables)");
  e->add_option("--bin-width", ev.bin_width, "Ground-truth count bin width");
  e->add_option("--out", ev.out, "Output directory for report.csv and bins.csv");
  e->add_flag("--oracle", ev.oracle, "Use ground-truth counts and upsampling maps");
  e->add_option("--jobs", ev.jobs, "Worker threads, 0 = all cores");

  TheoryArgs th;
  auto* v = app.add_subcommand("verify-theory", "Check division bounds and the closed-set error bound");
  v->add_option("--trials", th.trials, "Monte Carlo trials");
  v->add_option("--instances", th.instances, "Random grids in the division-bound sweep");
  v->add_option("--seed", th.seed, "Seed (falls back to SDC_SEED)");
  v->add_option("--out", th.out, "Output directory");
  v->add_option("--jobs", th.jobs, "Worker threads, 0 = all cores");
  v->add_flag("--inject-fault", th.inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kConfig;
  }

  if (*g) return guarded([&] { return run_gen(gen); });
  if (*t) return guarded([&] { return run_train(tr); });
  if (*e) return guarded([&] { return run_eval(ev); });
  return guarded([&] { return run_theory(th); });
}
