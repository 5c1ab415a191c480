#include "noisyens/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "noisyens/aggregate_mae.hpp"
#include "noisyens/aggregate_mse.hpp"
#include "noisyens/noise.hpp"

namespace noisyens {

namespace {

namespace streams {
constexpr std::uint64_t kDataset = 0x01;
constexpr std::uint64_t kFolds = 0x02;
constexpr std::uint64_t kBagging = 0x03;
constexpr std::uint64_t kEval = 0x04;
constexpr std::uint64_t kSubset = 0x05;
constexpr std::uint64_t kDemo = 0x06;
}  // namespace streams

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Deterministic parallel map: worker count never affects which task uses
/// which stream, only wall-clock time.
void parallel_for(int n_tasks, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n_tasks <= 1) {
    for (int i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n_tasks || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_workers = std::min(threads, n_tasks);
  pool.reserve(n_workers);
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t derived_seed(std::uint64_t master, std::uint64_t tag) {
  return CounterRng(master).split(tag).next_u64();
}

std::uint64_t derived_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t sub) {
  return CounterRng(master).split(tag).split(sub).next_u64();
}

double eps_y_of(const Vector& y) { return y.squaredNorm() / static_cast<double>(y.size()); }

/// Everything fold-level work needs: standardized train/test splits, the
/// fitted bagging ensemble, and both prediction matrices.
struct FoldData {
  Dataset train, test;
  EnsembleModel ensemble;
  PredictionMatrix phi_train, phi_test;
  double eps_y = 1.0;
};

std::vector<FoldData> prepare_folds(const ExperimentConfig& cfg, bool with_bagging) {
  const DatasetSpec dspec = dataset_spec_from_string(
      cfg.dataset, cfg.n_samples, derived_seed(cfg.seed, streams::kDataset));
  Dataset raw = load_or_generate_dataset(dspec);

  Dataset whole = raw;
  if (!cfg.per_fold_standardize) whole = standardize(raw).first;

  const auto folds =
      kfold_split(static_cast<int>(raw.n_samples()), cfg.k, derived_seed(cfg.seed, streams::kFolds));

  std::vector<FoldData> out(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldData& fd = out[f];
    if (cfg.per_fold_standardize) {
      Dataset train_raw = subset_dataset(raw, folds[f].train);
      auto [train_std, transform] = standardize(train_raw);
      fd.train = std::move(train_std);
      fd.test = apply_standardize(subset_dataset(raw, folds[f].test), transform);
    } else {
      fd.train = subset_dataset(whole, folds[f].train);
      fd.test = subset_dataset(whole, folds[f].test);
    }
    fd.eps_y = eps_y_of(fd.train.targets);
    if (with_bagging) {
      BaggingConfig bc;
      bc.T = cfg.tree.trees;
      bc.sample_fraction = cfg.tree.sample_fraction;
      bc.max_depth = cfg.tree.max_depth;
      bc.min_leaf = cfg.tree.min_leaf;
      bc.seed = derived_seed(cfg.seed, streams::kBagging, f);
      fd.ensemble = fit_bagging(fd.train, bc);
      fd.phi_train = build_prediction_matrix(fd.ensemble, fd.train);
      fd.phi_test = build_prediction_matrix(fd.ensemble, fd.test);
    }
  }
  return out;
}

NoiseModel profile_at(const ExperimentConfig& cfg, double snr_db_point, double eps_y, int T) {
  NoiseProfileSpec spec = profile_from_string(cfg.profile);
  spec.snr = snr_from_db(snr_db_point);
  spec.eps_y = eps_y;
  return build_noise_profile(spec, T);
}

}  // namespace

Dataset load_or_generate_dataset(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetSpec::Kind::Sine: {
      if (spec.n_samples < 1) throw ConfigError("dataset: n_samples must be >= 1");
      CounterRng rng(spec.seed);
      Matrix x(spec.n_samples, 1);
      Vector y(spec.n_samples);
      for (int i = 0; i < spec.n_samples; ++i) {
        const double xi = 6.0 * rng.next_double();
        x(i, 0) = xi;
        y(i) = std::sin(xi) + std::sin(6.0 * xi) + 0.1 * rng.next_gauss();
      }
      return Dataset(std::move(x), std::move(y), "sine");
    }
    case DatasetSpec::Kind::Hyperplane: {
      if (spec.n_samples < 1) throw ConfigError("dataset: n_samples must be >= 1");
      constexpr int d = 3;
      CounterRng root(spec.seed);
      CounterRng coef_rng = root.split(0);
      Vector c(d);
      for (int j = 0; j < d; ++j) c(j) = 2.0 * coef_rng.next_double() - 1.0;
      CounterRng row_rng = root.split(1);
      Matrix x(spec.n_samples, d);
      Vector y(spec.n_samples);
      for (int i = 0; i < spec.n_samples; ++i) {
        for (int j = 0; j < d; ++j) x(i, j) = 2.0 * row_rng.next_double() - 1.0;
        y(i) = c.dot(x.row(i)) + 0.1 * row_rng.next_gauss();
      }
      return Dataset(std::move(x), std::move(y), "hyperplane");
    }
    case DatasetSpec::Kind::Csv:
      return read_dataset_csv(spec.path);
  }
  throw ConfigError("dataset: unknown kind");
}

DatasetSpec dataset_spec_from_string(const std::string& text, int n_samples,
                                     std::uint64_t seed) {
  DatasetSpec spec;
  spec.n_samples = n_samples;
  spec.seed = seed;
  if (text == "sine") {
    spec.kind = DatasetSpec::Kind::Sine;
  } else if (text == "hyperplane") {
    spec.kind = DatasetSpec::Kind::Hyperplane;
  } else {
    spec.kind = DatasetSpec::Kind::Csv;
    spec.path = text;
  }
  return spec;
}

std::pair<Dataset, StandardizeTransform> standardize(const Dataset& dataset) {
  if (dataset.n_samples() < 1) throw DimensionError("standardize: empty dataset");
  const double n = static_cast<double>(dataset.n_samples());

  StandardizeTransform t;
  t.feature_mean = Vector::Zero(dataset.n_features());
  t.feature_scale = Vector::Ones(dataset.n_features());
  for (Eigen::Index j = 0; j < dataset.n_features(); ++j) {
    const double mean = dataset.features.col(j).mean();
    const double sd = std::sqrt((dataset.features.col(j).array() - mean).square().sum() / n);
    if (sd > 1e-12) {
      t.feature_mean(j) = mean;
      t.feature_scale(j) = sd;
    }
  }
  const double ty_mean = dataset.targets.mean();
  const double ty_sd = std::sqrt((dataset.targets.array() - ty_mean).square().sum() / n);
  if (ty_sd > 1e-12) {
    t.target_mean = ty_mean;
    t.target_scale = ty_sd;
  }
  return {apply_standardize(dataset, t), t};
}

Dataset apply_standardize(const Dataset& dataset, const StandardizeTransform& t) {
  if (dataset.n_features() != t.feature_mean.size()) {
    throw DimensionError("apply_standardize: feature width mismatch");
  }
  Matrix x = dataset.features;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    x.col(j) = (x.col(j).array() - t.feature_mean(j)) / t.feature_scale(j);
  }
  Vector y = (dataset.targets.array() - t.target_mean) / t.target_scale;
  return Dataset(std::move(x), std::move(y), dataset.name);
}

std::vector<FoldIndices> kfold_split(int n_rows, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("kfold_split: k must be >= 1");
  if (k > n_rows) throw ConfigError("kfold_split: k exceeds the sample count");
  std::vector<int> idx(n_rows);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng(seed);
  rng.shuffle(idx.begin(), idx.end());

  std::vector<FoldIndices> folds(k);
  const int base = n_rows / k;
  const int rem = n_rows % k;
  int start = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < rem ? 1 : 0);
    folds[f].test.assign(idx.begin() + start, idx.begin() + start + size);
    folds[f].train.reserve(n_rows - size);
    folds[f].train.insert(folds[f].train.end(), idx.begin(), idx.begin() + start);
    folds[f].train.insert(folds[f].train.end(), idx.begin() + start + size, idx.end());
    std::sort(folds[f].test.begin(), folds[f].test.end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
    start += size;
  }
  return folds;
}

std::vector<FoldIndices> kfold_split(const Dataset& dataset, int k, std::uint64_t seed) {
  return kfold_split(static_cast<int>(dataset.n_samples()), k, seed);
}

Dataset subset_dataset(const Dataset& dataset, const std::vector<int>& idx) {
  Matrix x(static_cast<Eigen::Index>(idx.size()), dataset.n_features());
  Vector y(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = dataset.features.row(idx[i]);
    y(static_cast<Eigen::Index>(i)) = dataset.targets(idx[i]);
  }
  return Dataset(std::move(x), std::move(y), dataset.name);
}

NoisyEval evaluate_noisy(const PredictionMatrix& phi_test, const Vector& alpha,
                         const NoiseModel& sigma, const Vector& y_test, int R,
                         double noisy_fraction, CounterRng rng) {
  if (R < 1) throw ConfigError("evaluate_noisy: R must be >= 1");
  if (noisy_fraction < 0.0 || noisy_fraction > 1.0) {
    throw ConfigError("evaluate_noisy: noisy_fraction must lie in [0, 1]");
  }
  if (phi_test.rows() != y_test.size() || phi_test.cols() != alpha.size() ||
      sigma.size() != alpha.size()) {
    throw DimensionError("evaluate_noisy: inconsistent shapes");
  }
  const Eigen::Index n = phi_test.rows();
  const Vector base = phi_test * alpha;
  const NoiseSampler sampler(sigma);
  const int noisy_count =
      static_cast<int>(std::lround(noisy_fraction * static_cast<double>(n)));
  const bool any_noise = !sampler.is_zero() && noisy_count > 0;

  double mse_sum = 0.0, mse_sq = 0.0, mae_sum = 0.0, mae_sq = 0.0;
  Vector noise(alpha.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::vector<char> noisy(static_cast<std::size_t>(n), 1);

  for (int r = 0; r < R; ++r) {
    CounterRng rng_r = rng.split(static_cast<std::uint64_t>(r));
    if (any_noise && noisy_count < n) {
      std::iota(order.begin(), order.end(), 0);
      CounterRng pick = rng_r.split(streams::kSubset);
      pick.shuffle(order.begin(), order.end());
      std::fill(noisy.begin(), noisy.end(), 0);
      for (int i = 0; i < noisy_count; ++i) noisy[static_cast<std::size_t>(order[i])] = 1;
    }
    double se = 0.0, ae = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double pred = base(i);
      if (any_noise && noisy[static_cast<std::size_t>(i)]) {
        sampler.draw_into(rng_r, noise);
        pred += alpha.dot(noise);
      }
      const double err = y_test(i) - pred;
      se += err * err;
      ae += std::abs(err);
    }
    const double mse_r = se / static_cast<double>(n);
    const double mae_r = ae / static_cast<double>(n);
    mse_sum += mse_r;
    mse_sq += mse_r * mse_r;
    mae_sum += mae_r;
    mae_sq += mae_r * mae_r;
  }

  NoisyEval ev;
  const double rd = static_cast<double>(R);
  ev.mse_mean = mse_sum / rd;
  ev.mae = mae_sum / rd;
  if (R > 1) {
    const double mse_var = std::max(0.0, (mse_sq - rd * ev.mse_mean * ev.mse_mean) / (rd - 1.0));
    const double mae_var = std::max(0.0, (mae_sq - rd * ev.mae * ev.mae) / (rd - 1.0));
    ev.mse_se = std::sqrt(mse_var / rd);
    ev.mae_se = std::sqrt(mae_var / rd);
  }
  ev.rmse = std::sqrt(ev.mse_mean);
  ev.rmse_se = ev.rmse > 0.0 ? ev.mse_se / (2.0 * ev.rmse) : 0.0;
  return ev;
}

NoisyEval evaluate_noisy(const EnsembleModel& ensemble, const AggregationWeights& weights,
                         const NoiseModel& sigma, const Dataset& test, int R,
                         double noisy_fraction, CounterRng rng) {
  const PredictionMatrix phi = build_prediction_matrix(ensemble, test);
  return evaluate_noisy(phi, weights.alpha, sigma, test.targets, R, noisy_fraction, rng);
}

NoisyEval evaluate_noisy(const GradBoostModel& model, const NoiseModel& sigma,
                         const Dataset& test, int R, double noisy_fraction, CounterRng rng) {
  const PredictionMatrix phi = build_prediction_matrix(model, test);
  return evaluate_noisy(phi, model.stage_alphas(), sigma, test.targets, R, noisy_fraction,
                        rng);
}

double mse_reduction(double gem_noisy_rmse, double tem_noisy_rmse,
                     double gem_noiseless_rmse) {
  if (!(gem_noiseless_rmse > 0.0)) {
    throw NumericalError("mse_reduction: noiseless baseline RMSE must be positive");
  }
  return 100.0 * (gem_noisy_rmse - tem_noisy_rmse) / gem_noiseless_rmse;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_metrics_csv: cannot open '" + path + "'");
  out << "dataset,method,profile,snr_db,fold,rmse,mae,rmse_se,mae_se\n";
  for (const MetricsRow& r : rows) {
    out << r.dataset << ',' << r.method << ',' << r.profile << ',' << fmt9(r.snr_db) << ','
        << r.fold << ',' << fmt9(r.rmse) << ',' << fmt9(r.mae) << ',' << fmt9(r.rmse_se)
        << ',' << fmt9(r.mae_se) << '\n';
  }
}

void write_dataset_csv(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_dataset_csv: cannot open '" + path + "'");
  for (Eigen::Index j = 0; j < dataset.n_features(); ++j) out << 'f' << j << ',';
  out << "target\n";
  for (Eigen::Index i = 0; i < dataset.n_samples(); ++i) {
    for (Eigen::Index j = 0; j < dataset.n_features(); ++j) {
      out << fmt17(dataset.features(i, j)) << ',';
    }
    out << fmt17(dataset.targets(i)) << '\n';
  }
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_dataset_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("read_dataset_csv: missing header row");

  std::vector<std::vector<double>> rows;
  std::size_t n_cols = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw ConfigError("read_dataset_csv: malformed value '" + cell + "' at line " +
                          std::to_string(line_no) + " of '" + path + "'");
      }
    }
    if (row.size() < 2) {
      throw ConfigError("read_dataset_csv: need at least one feature and a target at line " +
                        std::to_string(line_no));
    }
    if (n_cols == 0) n_cols = row.size();
    if (row.size() != n_cols) {
      throw ConfigError("read_dataset_csv: ragged row at line " + std::to_string(line_no) +
                        " (expected " + std::to_string(n_cols) + " columns)");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("read_dataset_csv: no data rows in '" + path + "'");

  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_cols - 1));
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < n_cols; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    y(static_cast<Eigen::Index>(i)) = rows[i][n_cols - 1];
  }
  return Dataset(std::move(x), std::move(y),
                 std::filesystem::path(path).stem().string());
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.k < 2) throw ConfigError("config: k must be >= 2");
  if (cfg.realizations < 1) throw ConfigError("config: realizations must be >= 1");
  if (cfg.noisy_fraction < 0.0 || cfg.noisy_fraction > 1.0) {
    throw ConfigError("config: noisy_fraction must lie in [0, 1]");
  }
  if (cfg.snr_db.empty()) throw ConfigError("config: snr_db grid is empty");
  if (cfg.tree.trees < 1) throw ConfigError("config: tree.trees must be >= 1");
  if (cfg.tree.sample_fraction <= 0.0 || cfg.tree.sample_fraction > 1.0) {
    throw ConfigError("config: tree.sample_fraction must lie in (0, 1]");
  }
  if (cfg.tree.max_depth < 0) throw ConfigError("config: tree.max_depth must be >= 0");
  if (cfg.tree.min_leaf < 1) throw ConfigError("config: tree.min_leaf must be >= 1");
  if (cfg.threads < 1) throw ConfigError("config: threads must be >= 1");
  if (cfg.gb_loss != "mse" && cfg.gb_loss != "mae") {
    throw ConfigError("config: gb_loss must be mse or mae");
  }
  profile_from_string(cfg.profile);  // throws on a bad profile string
}

SweepResult run_bagging_sweep(const ExperimentConfig& cfg) {
  validate_config(cfg);
  static const std::vector<std::string> known = {"bem", "gem", "tem", "mae-gd",
                                                 "mae-gd-nonrobust"};
  if (cfg.methods.empty()) throw ConfigError("config: methods list is empty");
  for (const std::string& m : cfg.methods) {
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw ConfigError("config: unknown method '" + m + "'");
    }
  }

  const std::vector<FoldData> folds = prepare_folds(cfg, true);
  const int n_points = static_cast<int>(cfg.snr_db.size());
  const int n_folds = static_cast<int>(folds.size());
  const int t_count = cfg.tree.trees;

  // Sigma-independent weights, one set per fold.
  struct FoldWeights {
    AggregationWeights bem, gem, nonrobust;
    double gem_noiseless_mse = 0.0;
  };
  std::vector<FoldWeights> fixed(n_folds);
  const bool wants_nonrobust =
      std::find(cfg.methods.begin(), cfg.methods.end(), "mae-gd-nonrobust") != cfg.methods.end();
  const bool wants_gains =
      std::find(cfg.methods.begin(), cfg.methods.end(), "gem") != cfg.methods.end() &&
      std::find(cfg.methods.begin(), cfg.methods.end(), "tem") != cfg.methods.end();
  parallel_for(n_folds, cfg.threads, [&](int f) {
    const FoldData& fd = folds[f];
    FoldWeights& fw = fixed[f];
    fw.bem = bem_weights(t_count);
    fw.gem = gem_weights(fd.phi_train, fd.train.targets);
    fw.gem_noiseless_mse = (fd.phi_test * fw.gem.alpha - fd.test.targets).squaredNorm() /
                           static_cast<double>(fd.test.n_samples());
    if (wants_nonrobust) {
      MaeGdConfig gd;
      gd.robust = false;
      fw.nonrobust = optimize_weights_gd(fd.phi_train, fd.train.targets,
                                         NoiseModel::zero(t_count), gd);
    }
  });

  struct TaskOut {
    std::vector<MetricsRow> rows;
    double gem_noisy_mse = 0.0, tem_noisy_mse = 0.0;
  };
  std::vector<TaskOut> results(static_cast<std::size_t>(n_points) * n_folds);

  parallel_for(n_points * n_folds, cfg.threads, [&](int task) {
    const int p = task / n_folds;
    const int f = task % n_folds;
    const FoldData& fd = folds[f];
    const NoiseModel sigma = profile_at(cfg, cfg.snr_db[p], fd.eps_y, t_count);
    TaskOut& out = results[task];

    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      const std::string& method = cfg.methods[mi];
      AggregationWeights w;
      if (method == "bem") {
        w = fixed[f].bem;
      } else if (method == "gem") {
        w = fixed[f].gem;
      } else if (method == "tem") {
        w = tem_weights(fd.phi_train, fd.train.targets, sigma, 1.0);
      } else if (method == "mae-gd") {
        MaeGdConfig gd;
        gd.robust = true;
        w = optimize_weights_gd(fd.phi_train, fd.train.targets, sigma, gd);
      } else {
        w = fixed[f].nonrobust;
      }
      CounterRng rng = CounterRng(cfg.seed)
                           .split(streams::kEval)
                           .split(static_cast<std::uint64_t>(f))
                           .split(static_cast<std::uint64_t>(p))
                           .split(mi);
      const NoisyEval ev = evaluate_noisy(fd.phi_test, w.alpha, sigma, fd.test.targets,
                                          cfg.realizations, cfg.noisy_fraction, rng);
      out.rows.push_back(MetricsRow{fd.train.name, method, cfg.profile, cfg.snr_db[p], f,
                                    ev.rmse, ev.mae, ev.rmse_se, ev.mae_se});
      if (method == "gem") out.gem_noisy_mse = ev.mse_mean;
      if (method == "tem") out.tem_noisy_mse = ev.mse_mean;
    }
  });

  SweepResult sweep;
  for (int p = 0; p < n_points; ++p) {
    for (int f = 0; f < n_folds; ++f) {
      auto& rows = results[static_cast<std::size_t>(p) * n_folds + f].rows;
      sweep.rows.insert(sweep.rows.end(), rows.begin(), rows.end());
    }
    if (wants_gains) {
      double gem_noisy = 0.0, tem_noisy = 0.0, gem_clean = 0.0;
      for (int f = 0; f < n_folds; ++f) {
        gem_noisy += results[static_cast<std::size_t>(p) * n_folds + f].gem_noisy_mse;
        tem_noisy += results[static_cast<std::size_t>(p) * n_folds + f].tem_noisy_mse;
        gem_clean += fixed[f].gem_noiseless_mse;
      }
      gem_noisy /= n_folds;
      tem_noisy /= n_folds;
      gem_clean /= n_folds;
      sweep.gains.push_back(GainRow{
          folds.front().train.name, cfg.profile, cfg.snr_db[p],
          mse_reduction(std::sqrt(gem_noisy), std::sqrt(tem_noisy), std::sqrt(gem_clean))});
    }
  }
  return sweep;
}

std::vector<MetricsRow> run_tem_lambda_sweep(const ExperimentConfig& cfg) {
  validate_config(cfg);
  if (cfg.lambda_grid.empty()) throw ConfigError("config: lambda grid is empty");
  for (double l : cfg.lambda_grid) {
    if (l < 0.0) throw ConfigError("config: lambda values must be non-negative");
  }

  const std::vector<FoldData> folds = prepare_folds(cfg, true);
  const int n_points = static_cast<int>(cfg.snr_db.size());
  const int n_folds = static_cast<int>(folds.size());
  const int n_lambda = static_cast<int>(cfg.lambda_grid.size());

  std::vector<std::vector<MetricsRow>> results(
      static_cast<std::size_t>(n_points) * n_folds);
  parallel_for(n_points * n_folds, cfg.threads, [&](int task) {
    const int p = task / n_folds;
    const int f = task % n_folds;
    const FoldData& fd = folds[f];
    const NoiseModel sigma = profile_at(cfg, cfg.snr_db[p], fd.eps_y, cfg.tree.trees);
    for (int li = 0; li < n_lambda; ++li) {
      const double lambda = cfg.lambda_grid[li];
      const AggregationWeights w = tem_weights(fd.phi_train, fd.train.targets, sigma, lambda);
      CounterRng rng = CounterRng(cfg.seed)
                           .split(streams::kEval)
                           .split(static_cast<std::uint64_t>(f))
                           .split(static_cast<std::uint64_t>(p))
                           .split(static_cast<std::uint64_t>(li));
      const NoisyEval ev = evaluate_noisy(fd.phi_test, w.alpha, sigma, fd.test.targets,
                                          cfg.realizations, cfg.noisy_fraction, rng);
      results[task].push_back(MetricsRow{fd.train.name, "tem(lambda=" + fmt9(lambda) + ")",
                                         cfg.profile, cfg.snr_db[p], f, ev.rmse, ev.mae,
                                         ev.rmse_se, ev.mae_se});
    }
  });

  std::vector<MetricsRow> rows;
  for (auto& chunk : results) rows.insert(rows.end(), chunk.begin(), chunk.end());
  return rows;
}

std::vector<BoundsRow> run_mae_bounds(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const std::vector<FoldData> folds = prepare_folds(cfg, true);
  const int n_points = static_cast<int>(cfg.snr_db.size());
  const int n_folds = static_cast<int>(folds.size());

  // Noiseless optima, shared across the SNR grid.
  std::vector<AggregationWeights> dagger(n_folds);
  parallel_for(n_folds, cfg.threads, [&](int f) {
    MaeGdConfig gd;
    gd.robust = false;
    dagger[f] =
        optimize_weights_gd(folds[f].phi_train, folds[f].train.targets,
                            NoiseModel::zero(cfg.tree.trees), gd);
  });

  std::vector<BoundsRow> rows(static_cast<std::size_t>(n_points) * n_folds);
  parallel_for(n_points * n_folds, cfg.threads, [&](int task) {
    const int p = task / n_folds;
    const int f = task % n_folds;
    const FoldData& fd = folds[f];
    const NoiseModel sigma = profile_at(cfg, cfg.snr_db[p], fd.eps_y, cfg.tree.trees);

    MaeGdConfig gd;
    gd.robust = true;
    const AggregationWeights opt =
        optimize_weights_gd(fd.phi_train, fd.train.targets, sigma, gd);
    const MaeBoundReport report =
        mae_bounds(fd.phi_train, fd.train.targets, sigma, dagger[f].alpha);

    rows[task] = BoundsRow{fd.train.name,
                           cfg.profile,
                           cfg.snr_db[p],
                           f,
                           report.lower,
                           report.upper,
                           to_string(report.lower_source),
                           to_string(report.upper_source),
                           expected_mae(opt.alpha, fd.phi_train, fd.train.targets, sigma)};
  });
  return rows;
}

void write_bounds_csv(const std::string& path, const std::vector<BoundsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_bounds_csv: cannot open '" + path + "'");
  out << "dataset,profile,snr_db,fold,lower,upper,lower_source,upper_source,optimized_mae\n";
  for (const BoundsRow& r : rows) {
    out << r.dataset << ',' << r.profile << ',' << fmt9(r.snr_db) << ',' << r.fold << ','
        << fmt9(r.lower) << ',' << fmt9(r.upper) << ',' << r.lower_source << ','
        << r.upper_source << ',' << fmt9(r.optimized_mae) << '\n';
  }
}

std::vector<MetricsRow> run_gb_size_sweep(const ExperimentConfig& cfg) {
  validate_config(cfg);
  if (cfg.size_grid.empty()) throw ConfigError("config: T grid is empty");
  for (int t : cfg.size_grid) {
    if (t < 1) throw ConfigError("config: T grid entries must be >= 1");
  }
  const GbLoss loss = cfg.gb_loss == "mse" ? GbLoss::Mse : GbLoss::Mae;

  const std::vector<FoldData> folds = prepare_folds(cfg, false);
  const int n_points = static_cast<int>(cfg.snr_db.size());
  const int n_folds = static_cast<int>(folds.size());
  const int n_sizes = static_cast<int>(cfg.size_grid.size());
  const GbTreeParams params{cfg.tree.max_depth, cfg.tree.min_leaf};

  std::vector<std::vector<MetricsRow>> results(
      static_cast<std::size_t>(n_points) * n_folds);
  parallel_for(n_points * n_folds, cfg.threads, [&](int task) {
    const int p = task / n_folds;
    const int f = task % n_folds;
    const FoldData& fd = folds[f];
    const double n_test = static_cast<double>(fd.test.n_samples());

    for (int si = 0; si < n_sizes; ++si) {
      const int t_count = cfg.size_grid[si];
      const NoiseModel sigma = profile_at(cfg, cfg.snr_db[p], fd.eps_y, t_count);
      const NoiseModel zero = NoiseModel::zero(t_count);

      const GradBoostModel robust =
          fit_gradboost(fd.train, t_count, sigma, loss, params, true);
      const GradBoostModel standard =
          fit_gradboost(fd.train, t_count, sigma, loss, params, false);

      auto emit = [&](const GradBoostModel& model, const NoiseModel& eval_sigma,
                      const std::string& label) {
        const PredictionMatrix phi = build_prediction_matrix(model, fd.test);
        const Vector alpha = model.stage_alphas();
        const double model_mse = (phi * alpha - fd.test.targets).squaredNorm() / n_test;
        const double noise_power = alpha.dot(eval_sigma.cov * alpha);
        const double rmse = std::sqrt(model_mse + noise_power);
        const double mae = expected_mae(alpha, phi, fd.test.targets, eval_sigma);
        results[task].push_back(MetricsRow{fd.train.name,
                                           label + "[T=" + std::to_string(t_count) + "]",
                                           cfg.profile, cfg.snr_db[p], f, rmse, mae, 0.0,
                                           0.0});
      };
      emit(standard, sigma, "gb");
      emit(robust, sigma, "rgb");
      emit(standard, zero, "gb-noiseless");
      emit(robust, zero, "rgb-noiseless");
    }
  });

  std::vector<MetricsRow> rows;
  for (auto& chunk : results) rows.insert(rows.end(), chunk.begin(), chunk.end());
  return rows;
}

DemoResult run_demo_motivation(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const std::vector<FoldData> folds = prepare_folds(cfg, true);
  const FoldData& fd = folds.front();
  const int t_count = cfg.tree.trees;
  const NoiseModel sigma = profile_at(cfg, cfg.snr_db.front(), fd.eps_y, t_count);
  const AggregationWeights bem = bem_weights(t_count);

  DemoResult demo;
  const Vector base = fd.phi_test * bem.alpha;
  CounterRng rng = CounterRng(cfg.seed).split(streams::kDemo);
  const NoiseSampler sampler(sigma);
  Vector noise(t_count);
  for (Eigen::Index i = 0; i < fd.test.n_samples(); ++i) {
    sampler.draw_into(rng, noise);
    demo.predictions.push_back(PredictionRow{fd.test.features(i, 0), fd.test.targets(i),
                                             base(i), base(i) + bem.alpha.dot(noise)});
  }

  CounterRng eval_rng = CounterRng(cfg.seed).split(streams::kEval).split(0).split(0);
  const NoisyEval noisy_ev = evaluate_noisy(fd.phi_test, bem.alpha, sigma, fd.test.targets,
                                            cfg.realizations, cfg.noisy_fraction, eval_rng);
  const NoisyEval clean_ev =
      evaluate_noisy(fd.phi_test, bem.alpha, NoiseModel::zero(t_count), fd.test.targets, 1,
                     1.0, eval_rng);
  demo.metrics.push_back(MetricsRow{fd.train.name, "bem", cfg.profile, cfg.snr_db.front(),
                                    0, noisy_ev.rmse, noisy_ev.mae, noisy_ev.rmse_se,
                                    noisy_ev.mae_se});
  demo.metrics.push_back(MetricsRow{fd.train.name, "bem-noiseless", cfg.profile,
                                    cfg.snr_db.front(), 0, clean_ev.rmse, clean_ev.mae,
                                    0.0, 0.0});
  return demo;
}

void write_predictions_csv(const std::string& path, const std::vector<PredictionRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_predictions_csv: cannot open '" + path + "'");
  out << "x,truth,noiseless,noisy\n";
  for (const PredictionRow& r : rows) {
    out << fmt9(r.x) << ',' << fmt9(r.truth) << ',' << fmt9(r.noiseless) << ','
        << fmt9(r.noisy) << '\n';
  }
}

void write_gains_csv(const std::string& path, const std::vector<GainRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_gains_csv: cannot open '" + path + "'");
  out << "dataset,profile,snr_db,mse_reduction_percent\n";
  for (const GainRow& r : rows) {
    out << r.dataset << ',' << r.profile << ',' << fmt9(r.snr_db) << ','
        << fmt9(r.gain_percent) << '\n';
  }
}

}  // namespace noisyens
