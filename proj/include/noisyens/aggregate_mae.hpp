#pragma once

#include "noisyens/core.hpp"

namespace noisyens {

/// Gradient-descent settings: momentum plus accumulated-gradient
/// normalization, early stop on a flat objective after i_min iterations.
/// robust = false optimizes the noise-free loss with its sign gradient.
struct MaeGdConfig {
  int i_min = 100;
  int i_max = 5000;
  double eta = 0.05;
  double gamma = 0.9;
  double tau = 1e-9;
  double eps = 1e-8;
  bool robust = true;
};

enum class MaeUpperMode { Generic, Bem, MinEig, Combined };

/// Upper/lower bracket on the optimal expected MAE, with which bound won.
struct MaeBoundReport {
  enum class UpperSource { Generic, Bem, MinEig };
  enum class LowerSource { NoiseDominated, Simple };
  double lower = 0.0;
  double upper = 0.0;
  UpperSource upper_source = UpperSource::Bem;
  LowerSource lower_source = LowerSource::Simple;
};

const char* to_string(MaeBoundReport::UpperSource s);
const char* to_string(MaeBoundReport::LowerSource s);

/// Noiseless MAE: (1/N_s) sum |Phi alpha - y|.
double noiseless_mae(const Vector& alpha, const PredictionMatrix& Phi, const Vector& y);

/// Expected MAE under n ~ N(0, Sigma): mean of per-sample folded-normal
/// means with location alpha'phi(x_i) - y_i and scale sqrt(alpha'Sigma alpha).
/// Degenerates to the noiseless MAE when the scale vanishes.
double expected_mae(const Vector& alpha, const PredictionMatrix& Phi, const Vector& y,
                    const NoiseModel& Sigma);

/// Exact gradient of expected_mae. Falls back to the noise-free subgradient
/// when the aggregated-noise scale drops below 1e-12.
Vector expected_mae_gradient(const Vector& alpha, const PredictionMatrix& Phi,
                             const Vector& y, const NoiseModel& Sigma);

/// (1/N_s) sum phi(x_i) sign(alpha'phi(x_i) - y_i), sign(0) = 0.
Vector noiseless_mae_gradient(const Vector& alpha, const PredictionMatrix& Phi,
                              const Vector& y);

/// Momentum descent with per-coordinate accumulated-gradient normalization,
/// started at uniform weights; returns the iterate with the smallest
/// objective among all visited iterates.
AggregationWeights optimize_weights_gd(const PredictionMatrix& Phi, const Vector& y,
                                       const NoiseModel& Sigma, const MaeGdConfig& config);

/// Upper bound on the optimal expected MAE. Generic mode evaluates
/// J1(alpha) + sqrt(2/pi alpha'Sigma alpha) at the supplied vector; bem and
/// mineig substitute the uniform vector and the minimal constrained-noise
/// vector. Combined takes the minimum of bem, mineig and, when alpha_opt is
/// supplied, the generic bound at alpha_opt.
double mae_upper_bound(const PredictionMatrix& Phi, const Vector& y,
                       const NoiseModel& Sigma, MaeUpperMode mode,
                       const Vector* alpha_opt = nullptr);

/// Lower bound on the optimal expected MAE: the larger of the noiseless
/// optimum J1(alpha_dagger) and the noise-dominated bound built from
/// per-sample worst residuals and the minimal constrained noise scale.
double mae_lower_bound(const PredictionMatrix& Phi, const Vector& y,
                       const NoiseModel& Sigma, const Vector& alpha_dagger);

/// Both bounds with provenance tags; throws NumericalError if they cross.
MaeBoundReport mae_bounds(const PredictionMatrix& Phi, const Vector& y,
                          const NoiseModel& Sigma, const Vector& alpha_dagger);

}  // namespace noisyens
