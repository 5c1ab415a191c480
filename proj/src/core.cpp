#include "noisyens/core.hpp"

#include <Eigen/Eigenvalues>
#include <utility>

namespace noisyens {

Dataset::Dataset(Matrix f, Vector t, std::string n)
    : features(std::move(f)), targets(std::move(t)), name(std::move(n)) {
  if (features.rows() != targets.size()) {
    throw DimensionError("dataset: feature row count " + std::to_string(features.rows()) +
                         " != target count " + std::to_string(targets.size()));
  }
  if (features.rows() < 1 || features.cols() < 1) {
    throw DimensionError("dataset: need at least one row and one feature column");
  }
}

NoiseModel::NoiseModel(Matrix c) : cov(std::move(c)) {
  if (cov.size() == 0 || cov.rows() != cov.cols()) {
    throw DimensionError("noise covariance must be square and non-empty");
  }
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw DimensionError("noise covariance must be symmetric");
  }
  if (cov.diagonal().minCoeff() < 0.0) {
    throw NumericalError("noise covariance has a negative diagonal entry");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw NumericalError("noise covariance is not positive semidefinite");
  }
}

NoiseModel NoiseModel::zero(Eigen::Index t) {
  NoiseModel m;
  m.cov = Matrix::Zero(t, t);
  return m;
}

const char* to_string(WeightMethod m) {
  switch (m) {
    case WeightMethod::Bem: return "bem";
    case WeightMethod::Gem: return "gem";
    case WeightMethod::Tem: return "tem";
    case WeightMethod::MaeGd: return "mae-gd";
    case WeightMethod::MaeGdNonrobust: return "mae-gd-nonrobust";
    case WeightMethod::Gb: return "gb";
    case WeightMethod::Rgb: return "rgb";
  }
  return "?";
}

double noisy_predict(const AggregationWeights& weights, const Vector& base_outputs,
                     const Vector& noise_draw) {
  if (weights.alpha.size() != base_outputs.size() ||
      weights.alpha.size() != noise_draw.size()) {
    throw DimensionError("noisy_predict: alpha, outputs and noise lengths differ");
  }
  return weights.alpha.dot(base_outputs + noise_draw);
}

}  // namespace noisyens
