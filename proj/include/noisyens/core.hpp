#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace noisyens {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Mismatched shapes between related objects (dataset vs ensemble, alpha vs T).
struct DimensionError : Error {
  using Error::Error;
};

/// A linear system stayed singular after the jitter retry.
struct SingularityError : Error {
  using Error::Error;
};

/// Iteration failed to converge, produced non-finite values, or an asserted
/// numerical property (e.g. bisection monotonicity) was violated.
struct NumericalError : Error {
  using Error::Error;
};

/// Bad user-facing input: flags, config files, grids, unreadable paths.
struct ConfigError : Error {
  using Error::Error;
};

/// Feature rows plus scalar targets. Immutable after construction;
/// transformations (standardization, fold subsetting) return new datasets.
struct Dataset {
  Matrix features;  // N_s x u
  Vector targets;   // N_s
  std::string name;

  Dataset() = default;
  Dataset(Matrix f, Vector t, std::string n);

  Eigen::Index n_samples() const { return features.rows(); }
  Eigen::Index n_features() const { return features.cols(); }
};

/// N_s x T matrix of base-regressor outputs; column t is regressor t
/// evaluated on every row of the dataset.
using PredictionMatrix = Matrix;

enum class WeightMethod { Bem, Gem, Tem, MaeGd, MaeGdNonrobust, Gb, Rgb };

const char* to_string(WeightMethod m);

/// Linear aggregation coefficients together with how they were produced.
struct AggregationWeights {
  Vector alpha;
  WeightMethod method = WeightMethod::Bem;
};

struct NoiseProfileSpec {
  enum class Kind { EquiVariance, NoisierSubset, SingleNoisy };
  Kind kind = Kind::EquiVariance;
  double snr = 1.0;    // linear
  double eps_y = 1.0;  // normalized sum of squared targets
  int m = 2;           // noisier_subset: one channel in m is noisier
  double a = 20.0;     // noisier_subset / single_noisy variance factor
};

/// Channel-noise covariance (units: squared target units) plus the profile
/// it was built from, when any.
struct NoiseModel {
  Matrix cov;
  NoiseProfileSpec profile;
  bool has_profile = false;

  NoiseModel() = default;
  explicit NoiseModel(Matrix c);

  static NoiseModel zero(Eigen::Index t);

  Eigen::Index size() const { return cov.rows(); }
  bool is_zero() const { return cov.size() == 0 || cov.isZero(0.0); }
};

/// Noisy linear aggregate: alpha' * (phi + n).
double noisy_predict(const AggregationWeights& weights, const Vector& base_outputs,
                     const Vector& noise_draw);

}  // namespace noisyens
