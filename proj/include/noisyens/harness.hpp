#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "noisyens/core.hpp"
#include "noisyens/gradboost.hpp"
#include "noisyens/rng.hpp"
#include "noisyens/tree.hpp"

namespace noisyens {

struct DatasetSpec {
  enum class Kind { Sine, Hyperplane, Csv };
  Kind kind = Kind::Sine;
  int n_samples = 1000;
  std::uint64_t seed = 0;
  std::string path;  // Csv only
};

/// sine: y = sin(x) + sin(6x) + eps, x uniform on [0, 6], eps ~ N(0, 0.01).
/// hyperplane: y = c'x + eps with seeded random c, 3 features.
/// csv: header row, numeric columns, last column is the target.
Dataset load_or_generate_dataset(const DatasetSpec& spec);

/// Dataset string from the CLI: "sine", "hyperplane", or a CSV path.
DatasetSpec dataset_spec_from_string(const std::string& text, int n_samples,
                                     std::uint64_t seed);

struct StandardizeTransform {
  Vector feature_mean, feature_scale;
  double target_mean = 0.0, target_scale = 1.0;
};

/// Per-column zero mean and unit standard deviation (population convention),
/// target included; constant columns pass through unscaled.
std::pair<Dataset, StandardizeTransform> standardize(const Dataset& dataset);

/// Apply a fitted transform to another dataset (per-fold protocol).
Dataset apply_standardize(const Dataset& dataset, const StandardizeTransform& t);

struct FoldIndices {
  std::vector<int> train, test;
};

/// Seeded shuffle then contiguous disjoint test blocks covering all indices;
/// sizes differ by at most one.
std::vector<FoldIndices> kfold_split(int n_rows, int k, std::uint64_t seed);
std::vector<FoldIndices> kfold_split(const Dataset& dataset, int k, std::uint64_t seed);

Dataset subset_dataset(const Dataset& dataset, const std::vector<int>& idx);

/// Realization-averaged noisy metrics plus standard errors.
struct NoisyEval {
  double rmse = 0.0;
  double mae = 0.0;
  double rmse_se = 0.0;
  double mae_se = 0.0;
  double mse_mean = 0.0;
  double mse_se = 0.0;
};

/// R fresh noise draws per test sample; noise hits a seeded noisy_fraction
/// subset of the instances in each realization (fraction 1 by default).
NoisyEval evaluate_noisy(const PredictionMatrix& phi_test, const Vector& alpha,
                         const NoiseModel& sigma, const Vector& y_test, int R,
                         double noisy_fraction, CounterRng rng);

NoisyEval evaluate_noisy(const EnsembleModel& ensemble, const AggregationWeights& weights,
                         const NoiseModel& sigma, const Dataset& test, int R,
                         double noisy_fraction, CounterRng rng);

NoisyEval evaluate_noisy(const GradBoostModel& model, const NoiseModel& sigma,
                         const Dataset& test, int R, double noisy_fraction, CounterRng rng);

/// Robustness gain of the trade-off weights over the noiseless-optimal ones,
/// as a percentage of the noiseless baseline error.
double mse_reduction(double gem_noisy_rmse, double tem_noisy_rmse,
                     double gem_noiseless_rmse);

struct MetricsRow {
  std::string dataset, method, profile;
  double snr_db = 0.0;
  int fold = 0;
  double rmse = 0.0, mae = 0.0, rmse_se = 0.0, mae_se = 0.0;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

void write_dataset_csv(const std::string& path, const Dataset& dataset);
Dataset read_dataset_csv(const std::string& path);

struct TreeConfig {
  int trees = 32;
  double sample_fraction = 0.6;
  int max_depth = 8;
  int min_leaf = 2;
};

/// Resolved experiment parameters; every CLI run records one next to its
/// outputs so results can be reproduced bit for bit.
struct ExperimentConfig {
  std::string command;
  std::string dataset = "sine";
  int n_samples = 1000;
  std::vector<std::string> methods = {"gem", "tem"};
  std::string profile = "noisier-subset:m=2,a=20";
  std::vector<double> snr_db = {-12, -9, -6, -3, 0, 3, 6, 9, 12, 15, 18};
  int k = 5;
  int realizations = 100;
  double noisy_fraction = 1.0;
  std::vector<double> lambda_grid = {0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<int> size_grid = {4, 16, 64};
  std::string gb_loss = "mse";
  TreeConfig tree;
  std::uint64_t seed = 0;
  int threads = 1;
  bool per_fold_standardize = false;
};

void validate_config(const ExperimentConfig& cfg);

struct GainRow {
  std::string dataset, profile;
  double snr_db = 0.0;
  double gain_percent = 0.0;
};

struct SweepResult {
  std::vector<MetricsRow> rows;
  std::vector<GainRow> gains;  // filled when both gem and tem were run
};

/// Bagging aggregation sweep over the SNR grid (also backs `eval`).
SweepResult run_bagging_sweep(const ExperimentConfig& cfg);

/// Trade-off sweep over lambda at fixed SNR with partially noisy inference.
std::vector<MetricsRow> run_tem_lambda_sweep(const ExperimentConfig& cfg);

struct BoundsRow {
  std::string dataset, profile;
  double snr_db = 0.0;
  int fold = 0;
  double lower = 0.0, upper = 0.0;
  std::string lower_source, upper_source;
  double optimized_mae = 0.0;
};

/// Bracket the optimal expected MAE per fold and SNR point.
std::vector<BoundsRow> run_mae_bounds(const ExperimentConfig& cfg);
void write_bounds_csv(const std::string& path, const std::vector<BoundsRow>& rows);

/// Robust vs standard gradient boosting across ensemble sizes; losses are
/// evaluated analytically on the test folds.
std::vector<MetricsRow> run_gb_size_sweep(const ExperimentConfig& cfg);

struct PredictionRow {
  double x = 0.0, truth = 0.0, noiseless = 0.0, noisy = 0.0;
};

struct DemoResult {
  std::vector<PredictionRow> predictions;
  std::vector<MetricsRow> metrics;
};

/// Single-noisy-channel illustration: per-test-point predictions with and
/// without noise, plus summary metrics.
DemoResult run_demo_motivation(const ExperimentConfig& cfg);
void write_predictions_csv(const std::string& path, const std::vector<PredictionRow>& rows);

void write_gains_csv(const std::string& path, const std::vector<GainRow>& rows);

}  // namespace noisyens
