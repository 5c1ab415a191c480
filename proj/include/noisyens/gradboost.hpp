#pragma once

#include <string>
#include <vector>

#include "noisyens/core.hpp"
#include "noisyens/tree.hpp"

namespace noisyens {

enum class GbLoss { Mse, Mae };

const char* to_string(GbLoss loss);

struct GbStage {
  RegressionTree tree;
  double alpha = 0.0;
};

/// Stage-wise boosted model. Stage 1 is always the constant-1 regressor;
/// later stages fit the loss negative gradient and receive a noise-aware
/// scalar coefficient.
struct GradBoostModel {
  std::vector<GbStage> stages;
  GbLoss loss = GbLoss::Mse;
  NoiseModel sigma;  // covariance used when the coefficients were set
  bool robust = true;

  int size() const { return static_cast<int>(stages.size()); }
  double predict(const Vector& x) const;
  Vector stage_alphas() const;
};

struct GbTreeParams {
  int max_depth = 1;
  int min_leaf = 2;
};

/// mse: 2 (y_i - f_i); mae: sign(y_i - f_i) with sign(0) = 0.
Vector negative_gradient(GbLoss loss, const Vector& y, const Vector& f_hat);

/// Closed-form stage coefficient for the expected squared loss, including
/// the cross-covariance correction against earlier stages. t is the 1-based
/// stage index; alpha_prefix holds the t-1 earlier coefficients.
double robust_alpha_mse(const Vector& phi_t, const Vector& y, const Vector& f_hat_prev,
                        const NoiseModel& Sigma, const Vector& alpha_prefix, int t);

/// Scalar expected-MAE stage coefficient: minimizes the mean folded-normal
/// loss with location alpha phi_t(x_i) - omega_i and scale |alpha| sigma_t
/// by golden-section search refined with derivative bisection. Earlier-stage
/// noise enters through its mean only.
double robust_alpha_mae(const Vector& phi_t, const Vector& y, const Vector& f_hat_prev,
                        const NoiseModel& Sigma, const Vector& alpha_prefix, int t);

/// Analytic expected stage loss used to set the MSE coefficient: residual
/// fit term, earlier-stage aggregated noise power, the recursive
/// cross-covariance term, and the own-channel noise power.
double gb_stage_expected_mse(double alpha, const Vector& phi_t, const Vector& residual,
                             const NoiseModel& Sigma, const Vector& alpha_prefix, int t);

/// Analytic expected stage loss for the MAE coefficient search.
double gb_stage_expected_mae(double alpha, const Vector& phi_t, const Vector& omega,
                             double sigma_t);

/// Algorithm: constant first stage, then per stage fit a squared-error tree
/// to the loss negative gradient and set its coefficient with the robust
/// rule (robust = false uses Sigma = 0, the standard method).
GradBoostModel fit_gradboost(const Dataset& dataset, int T, const NoiseModel& Sigma,
                             GbLoss loss, const GbTreeParams& tree_params, bool robust);

/// Entry (i, t) = stage-t regressor on dataset row i (coefficients excluded).
PredictionMatrix build_prediction_matrix(const GradBoostModel& model,
                                         const Dataset& dataset);

/// Versioned flat-file round trip for golden-model tests.
void save_gradboost(const GradBoostModel& model, const std::string& path);
GradBoostModel load_gradboost(const std::string& path);

}  // namespace noisyens
