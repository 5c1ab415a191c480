#include "noisyens/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "json.hpp"

namespace noisyens::cli {

namespace {

using nlohmann::json;

double parse_number(const std::string& text) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("grid: '" + text + "' is not a number");
  }
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(text);
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: root must be a JSON object");
  ExperimentConfig cfg;

  auto grid_of = [](const json& v, const char* key) -> std::vector<double> {
    if (v.is_string()) return parse_grid(v.get<std::string>());
    if (v.is_array()) {
      std::vector<double> out;
      for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError(std::string("config: '") + key + "' holds a non-number");
        out.push_back(e.get<double>());
      }
      return out;
    }
    throw ConfigError(std::string("config: '") + key + "' must be a grid string or array");
  };

  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "command") {
        cfg.command = value.get<std::string>();
      } else if (key == "dataset") {
        cfg.dataset = value.get<std::string>();
      } else if (key == "n_samples") {
        cfg.n_samples = value.get<int>();
      } else if (key == "methods") {
        if (value.is_string()) {
          cfg.methods = split_csv(value.get<std::string>());
        } else {
          cfg.methods = value.get<std::vector<std::string>>();
        }
      } else if (key == "profile") {
        cfg.profile = value.get<std::string>();
      } else if (key == "snr_db") {
        cfg.snr_db = grid_of(value, "snr_db");
      } else if (key == "k") {
        cfg.k = value.get<int>();
      } else if (key == "realizations") {
        cfg.realizations = value.get<int>();
      } else if (key == "noisy_fraction") {
        cfg.noisy_fraction = value.get<double>();
      } else if (key == "lambda") {
        cfg.lambda_grid = grid_of(value, "lambda");
      } else if (key == "T") {
        if (value.is_string()) {
          cfg.size_grid = parse_int_grid(value.get<std::string>());
        } else {
          cfg.size_grid = value.get<std::vector<int>>();
        }
      } else if (key == "gb_loss") {
        cfg.gb_loss = value.get<std::string>();
      } else if (key == "tree") {
        if (!value.is_object()) throw ConfigError("config: 'tree' must be an object");
        for (const auto& [tk, tv] : value.items()) {
          if (tk == "trees") {
            cfg.tree.trees = tv.get<int>();
          } else if (tk == "sample_fraction") {
            cfg.tree.sample_fraction = tv.get<double>();
          } else if (tk == "max_depth") {
            cfg.tree.max_depth = tv.get<int>();
          } else if (tk == "min_leaf") {
            cfg.tree.min_leaf = tv.get<int>();
          } else {
            throw ConfigError("config: unknown key 'tree." + tk + "'");
          }
        }
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "threads") {
        cfg.threads = value.get<int>();
      } else if (key == "per_fold_standardize") {
        cfg.per_fold_standardize = value.get<bool>();
      } else {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config: bad value type for '" + key + "'");
    }
  }
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["command"] = cfg.command;
  j["dataset"] = cfg.dataset;
  j["n_samples"] = cfg.n_samples;
  j["methods"] = cfg.methods;
  j["profile"] = cfg.profile;
  j["snr_db"] = cfg.snr_db;
  j["k"] = cfg.k;
  j["realizations"] = cfg.realizations;
  j["noisy_fraction"] = cfg.noisy_fraction;
  j["lambda"] = cfg.lambda_grid;
  j["T"] = cfg.size_grid;
  j["gb_loss"] = cfg.gb_loss;
  j["tree"] = {{"trees", cfg.tree.trees},
               {"sample_fraction", cfg.tree.sample_fraction},
               {"max_depth", cfg.tree.max_depth},
               {"min_leaf", cfg.tree.min_leaf}};
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["per_fold_standardize"] = cfg.per_fold_standardize;
  return j;
}

/// Raw flag values; only entries the user actually set override the config.
struct FlagValues {
  std::string config_path, out_dir;
  std::string dataset, methods, profile, snr_db, lambda, t_grid, gb_loss;
  int n_samples = 0, k = 0, realizations = 0, trees = 0, tree_depth = 0, min_leaf = 0,
      threads = 0;
  double noisy_fraction = 0.0, sample_fraction = 0.0;
  std::uint64_t seed = 0;
  bool per_fold_standardize = false;
};

ExperimentConfig defaults_for(const std::string& command) {
  ExperimentConfig cfg;
  cfg.command = command;
  if (command == "bagging-sweep-snr") {
    cfg.methods = {"gem", "tem"};
    cfg.profile = "noisier-subset:m=2,a=20";
  } else if (command == "tem-lambda-sweep") {
    cfg.profile = "equi-variance";
    cfg.snr_db = {-6};
    cfg.noisy_fraction = 0.5;
    cfg.methods = {"tem"};
  } else if (command == "mae-bounds") {
    cfg.profile = "noisier-subset:m=2,a=20";
    cfg.tree.trees = 8;
    cfg.tree.max_depth = 4;
    cfg.methods = {"mae-gd"};
  } else if (command == "gb-size-sweep") {
    cfg.profile = "equi-variance";
    cfg.snr_db = {18};
    cfg.tree.max_depth = 1;
    cfg.methods = {"gb", "rgb"};
  } else if (command == "demo-motivation") {
    cfg.profile = "single-noisy:a=20";
    cfg.snr_db = {-6};
    cfg.tree.trees = 5;
    cfg.methods = {"bem"};
  } else if (command == "eval") {
    cfg.methods = {"bem"};
    cfg.profile = "equi-variance";
    cfg.snr_db = {0};
  } else if (command == "gen-data") {
    cfg.methods = {};
  }
  return cfg;
}

struct SubcommandSpec {
  CLI::App* app = nullptr;
  FlagValues* flags = nullptr;
};

/// One place registers every flag, so help text and the override loop can
/// never drift apart.
void add_common_options(CLI::App* sub, FlagValues& v, bool with_methods,
                        bool with_lambda, bool with_tgrid, bool data_only) {
  sub->add_option("--config", v.config_path, "JSON config file; flags override its values");
  sub->add_option("-o,--out", v.out_dir,
                  "Output directory (default: $NE_OUTPUT_DIR/<command> or ./noisyens-out/<command>)");
  sub->add_option("--dataset", v.dataset, "sine, hyperplane, or a CSV path (last column = target)");
  sub->add_option("--n-samples", v.n_samples, "Synthetic dataset size");
  sub->add_option("--seed", v.seed, "Master seed; fixes every downstream stream");
  if (data_only) return;
  sub->add_option("--profile", v.profile,
                  "Noise profile: equi-variance | noisier-subset:m=2,a=20 | single-noisy:a=20");
  sub->add_option("--snr-db", v.snr_db, "SNR grid in dB: value, list, or start:step:stop");
  sub->add_option("--k", v.k, "Cross-validation folds");
  sub->add_option("--realizations", v.realizations, "Noise realizations per fold");
  sub->add_option("--noisy-fraction", v.noisy_fraction,
                  "Fraction of inference instances that see noise");
  sub->add_option("--trees", v.trees, "Ensemble size T (bagging commands)");
  sub->add_option("--tree-depth", v.tree_depth, "Base-regressor maximum depth");
  sub->add_option("--min-leaf", v.min_leaf, "Minimum training rows per leaf");
  sub->add_option("--sample-fraction", v.sample_fraction, "Bagging subsample fraction");
  sub->add_option("--threads", v.threads, "Worker cap for fold/grid parallelism");
  sub->add_flag("--per-fold-standardize", v.per_fold_standardize,
                "Standardize with per-fold training statistics instead of whole-dataset ones");
  if (with_methods) {
    sub->add_option("--methods", v.methods,
                    "Comma list among bem,gem,tem,mae-gd,mae-gd-nonrobust");
  }
  if (with_lambda) {
    sub->add_option("--lambda", v.lambda, "Trade-off multiplier grid");
  }
  if (with_tgrid) {
    sub->add_option("--T", v.t_grid, "Boosting ensemble-size grid");
    sub->add_option("--loss", v.gb_loss, "Boosting loss: mse or mae");
  }
}

void apply_flag_overrides(const CLI::App* sub, const FlagValues& v, ExperimentConfig& cfg) {
  auto set = [&](const char* name) { return sub->count(name) > 0; };
  if (set("--dataset")) cfg.dataset = v.dataset;
  if (set("--n-samples")) cfg.n_samples = v.n_samples;
  if (set("--seed")) cfg.seed = v.seed;
  if (sub->get_option_no_throw("--profile") == nullptr) return;  // gen-data
  if (set("--profile")) cfg.profile = v.profile;
  if (set("--snr-db")) cfg.snr_db = parse_grid(v.snr_db);
  if (set("--k")) cfg.k = v.k;
  if (set("--realizations")) cfg.realizations = v.realizations;
  if (set("--noisy-fraction")) cfg.noisy_fraction = v.noisy_fraction;
  if (set("--trees")) cfg.tree.trees = v.trees;
  if (set("--tree-depth")) cfg.tree.max_depth = v.tree_depth;
  if (set("--min-leaf")) cfg.tree.min_leaf = v.min_leaf;
  if (set("--sample-fraction")) cfg.tree.sample_fraction = v.sample_fraction;
  if (set("--threads")) cfg.threads = v.threads;
  if (set("--per-fold-standardize")) cfg.per_fold_standardize = true;
  if (sub->get_option_no_throw("--methods") != nullptr && set("--methods")) {
    cfg.methods = split_csv(v.methods);
  }
  if (sub->get_option_no_throw("--lambda") != nullptr && set("--lambda")) {
    cfg.lambda_grid = parse_grid(v.lambda);
  }
  if (sub->get_option_no_throw("--T") != nullptr) {
    if (set("--T")) cfg.size_grid = parse_int_grid(v.t_grid);
    if (set("--loss")) cfg.gb_loss = v.gb_loss;
  }
}

std::filesystem::path resolve_out_dir(const std::string& flag_value,
                                      const std::string& command) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("NE_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env) / command;
  }
  return std::filesystem::path("noisyens-out") / command;
}

void write_resolved_config(const std::filesystem::path& dir, const ExperimentConfig& cfg) {
  std::ofstream out(dir / "config.json");
  if (!out) throw ConfigError("cannot write " + (dir / "config.json").string());
  out << config_to_json(cfg).dump(2) << "\n";
}

int execute(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_resolved_config(out_dir, cfg);

  if (cfg.command == "gen-data") {
    const DatasetSpec spec = dataset_spec_from_string(cfg.dataset, cfg.n_samples, cfg.seed);
    write_dataset_csv((out_dir / "dataset.csv").string(), load_or_generate_dataset(spec));
  } else if (cfg.command == "bagging-sweep-snr" || cfg.command == "eval") {
    const SweepResult sweep = run_bagging_sweep(cfg);
    write_metrics_csv((out_dir / "metrics.csv").string(), sweep.rows);
    if (!sweep.gains.empty()) {
      write_gains_csv((out_dir / "gains.csv").string(), sweep.gains);
    }
  } else if (cfg.command == "tem-lambda-sweep") {
    write_metrics_csv((out_dir / "metrics.csv").string(), run_tem_lambda_sweep(cfg));
  } else if (cfg.command == "mae-bounds") {
    write_bounds_csv((out_dir / "bounds.csv").string(), run_mae_bounds(cfg));
  } else if (cfg.command == "gb-size-sweep") {
    write_metrics_csv((out_dir / "metrics.csv").string(), run_gb_size_sweep(cfg));
  } else if (cfg.command == "demo-motivation") {
    const DemoResult demo = run_demo_motivation(cfg);
    write_predictions_csv((out_dir / "predictions.csv").string(), demo.predictions);
    write_metrics_csv((out_dir / "metrics.csv").string(), demo.metrics);
  } else {
    throw ConfigError("unknown command '" + cfg.command + "'");
  }
  std::cout << "wrote " << out_dir.string() << "\n";
  return 0;
}

struct AppBundle {
  CLI::App app{"noisy-channel ensemble regression experiments", "noisyens"};
  std::map<std::string, SubcommandSpec> subs;
  std::map<std::string, std::unique_ptr<FlagValues>> values;
};

std::unique_ptr<AppBundle> build_app() {
  auto bundle = std::make_unique<AppBundle>();
  bundle->app.require_subcommand(0, 1);

  auto add = [&](const std::string& name, const std::string& desc, bool methods,
                 bool lambda, bool tgrid, bool data_only) {
    CLI::App* sub = bundle->app.add_subcommand(name, desc);
    auto vals = std::make_unique<FlagValues>();
    add_common_options(sub, *vals, methods, lambda, tgrid, data_only);
    bundle->subs[name] = SubcommandSpec{sub, vals.get()};
    bundle->values[name] = std::move(vals);
  };

  add("gen-data", "Generate a synthetic dataset CSV", false, false, false, true);
  add("bagging-sweep-snr", "Aggregation methods vs SNR on bagged trees", true, false,
      false, false);
  add("tem-lambda-sweep", "Trade-off multiplier sweep with partially noisy inference",
      false, true, false, false);
  add("mae-bounds", "Bracket the optimal expected MAE across the SNR grid", false, false,
      false, false);
  add("gb-size-sweep", "Robust vs standard gradient boosting across ensemble sizes",
      false, false, true, false);
  add("demo-motivation", "Per-point predictions under a single noisy channel", false,
      false, false, false);
  add("eval", "Evaluate aggregation methods at fixed settings", true, false, false,
      false);
  return bundle;
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  if (text.empty()) throw ConfigError("grid: empty specification");
  if (text.find(':') != std::string::npos) {
    const std::vector<std::string> parts = split_csv(text);
    if (parts.size() != 1) throw ConfigError("grid: mixed ',' and ':' forms");
    std::vector<std::string> fields;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ':')) fields.push_back(item);
    if (fields.size() != 3) throw ConfigError("grid: range form is start:step:stop");
    const double start = parse_number(fields[0]);
    const double step = parse_number(fields[1]);
    const double stop = parse_number(fields[2]);
    if (step == 0.0) throw ConfigError("grid: step must be non-zero");
    const double span = (stop - start) / step;
    if (span < -1e-9) throw ConfigError("grid: stop unreachable with this step");
    const int count = static_cast<int>(std::floor(span + 1e-9)) + 1;
    std::vector<double> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(start + i * step);
    return out;
  }
  std::vector<double> out;
  for (const std::string& item : split_csv(text)) out.push_back(parse_number(item));
  if (out.empty()) throw ConfigError("grid: empty specification");
  return out;
}

std::vector<int> parse_int_grid(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_grid(text)) {
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9) throw ConfigError("grid: '" + text + "' holds non-integers");
    out.push_back(static_cast<int>(r));
  }
  return out;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

std::vector<std::string> subcommand_names() {
  return {"gen-data",      "bagging-sweep-snr", "tem-lambda-sweep", "mae-bounds",
          "gb-size-sweep", "demo-motivation",   "eval"};
}

std::vector<std::string> registered_flags(const std::string& subcommand) {
  const auto bundle = build_app();
  const auto it = bundle->subs.find(subcommand);
  if (it == bundle->subs.end()) throw ConfigError("unknown subcommand '" + subcommand + "'");
  std::vector<std::string> names;
  for (const CLI::Option* opt : it->second.app->get_options()) {
    if (opt->get_name() == "--help") continue;
    names.push_back(opt->get_name());
  }
  return names;
}

int run(const std::vector<std::string>& args) {
  const auto bundle = build_app();
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    bundle->app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return bundle->app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return bundle->app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  std::string command;
  for (const auto& [name, spec] : bundle->subs) {
    if (spec.app->parsed()) {
      command = name;
      break;
    }
  }
  if (command.empty()) {
    std::cerr << bundle->app.help() << "\n";
    return 2;
  }

  try {
    const SubcommandSpec& spec = bundle->subs.at(command);
    ExperimentConfig cfg = defaults_for(command);
    if (spec.app->count("--config") > 0) {
      cfg = parse_config(spec.flags->config_path);
      if (!cfg.command.empty() && cfg.command != command) {
        throw ConfigError("config: file records command '" + cfg.command +
                          "' but subcommand is '" + command + "'");
      }
      cfg.command = command;
    }
    apply_flag_overrides(spec.app, *spec.flags, cfg);
    return execute(cfg, resolve_out_dir(spec.flags->out_dir, command));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace noisyens::cli
