#include "noisyens/aggregate_mae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "noisyens/numerics.hpp"

namespace noisyens {

namespace {

constexpr double kSqrt2OverPi = 0.79788456080286535588;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kSigmaFloor = 1e-12;

void check_dims(const Vector& alpha, const PredictionMatrix& Phi, const Vector& y,
                const NoiseModel* Sigma, const char* who) {
  if (Phi.rows() != y.size()) throw DimensionError(std::string(who) + ": Phi rows != |y|");
  if (alpha.size() != Phi.cols()) throw DimensionError(std::string(who) + ": alpha length != T");
  if (Sigma != nullptr && Sigma->size() != Phi.cols()) {
    throw DimensionError(std::string(who) + ": Sigma size != T");
  }
}

double noise_scale(const Vector& alpha, const NoiseModel& Sigma) {
  return std::sqrt(std::max(0.0, alpha.dot(Sigma.cov * alpha)));
}

}  // namespace

const char* to_string(MaeBoundReport::UpperSource s) {
  switch (s) {
    case MaeBoundReport::UpperSource::Generic: return "generic";
    case MaeBoundReport::UpperSource::Bem: return "bem";
    case MaeBoundReport::UpperSource::MinEig: return "mineig";
  }
  return "?";
}

const char* to_string(MaeBoundReport::LowerSource s) {
  switch (s) {
    case MaeBoundReport::LowerSource::NoiseDominated: return "noise_dominated";
    case MaeBoundReport::LowerSource::Simple: return "simple";
  }
  return "?";
}

double noiseless_mae(const Vector& alpha, const PredictionMatrix& Phi, const Vector& y) {
  check_dims(alpha, Phi, y, nullptr, "noiseless_mae");
  return (Phi * alpha - y).cwiseAbs().mean();
}

double expected_mae(const Vector& alpha, const PredictionMatrix& Phi, const Vector& y,
                    const NoiseModel& Sigma) {
  check_dims(alpha, Phi, y, &Sigma, "expected_mae");
  const double sigma = noise_scale(alpha, Sigma);
  const Vector mu = Phi * alpha - y;
  if (sigma < kSigmaFloor) return mu.cwiseAbs().mean();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    acc += folded_normal_mean(mu(i), sigma);
  }
  return acc / static_cast<double>(mu.size());
}

Vector expected_mae_gradient(const Vector& alpha, const PredictionMatrix& Phi,
                             const Vector& y, const NoiseModel& Sigma) {
  check_dims(alpha, Phi, y, &Sigma, "expected_mae_gradient");
  const double sigma = noise_scale(alpha, Sigma);
  if (sigma < kSigmaFloor) {
    return noiseless_mae_gradient(alpha, Phi, y);  // degenerate-gradient path
  }

  const Eigen::Index n = Phi.rows();
  const Eigen::Index t = Phi.cols();
  const Vector mu = Phi * alpha - y;
  const Vector sigma_prime = (Sigma.cov * alpha) / sigma;

  Vector grad = Vector::Zero(t);
  Vector rho_prime(t);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rho = mu(i) / sigma;
    const double erf_term = std::erf(rho * kInvSqrt2);
    const double rho2 = rho * rho;
    if (rho2 < 1400.0) {
      const double e = std::exp(-0.5 * rho2);
      const double pdf = kInvSqrt2Pi * e;
      for (Eigen::Index j = 0; j < t; ++j) {
        const double rp = Phi(i, j) / sigma - (rho / sigma) * sigma_prime(j);
        rho_prime(j) = rp;
        grad(j) += kSqrt2OverPi * e * (sigma_prime(j) - sigma * rho * rp) +
                   Phi(i, j) * erf_term + 2.0 * mu(i) * pdf * rp;
      }
    } else {
      // Density terms underflow; only the erf term survives.
      for (Eigen::Index j = 0; j < t; ++j) grad(j) += Phi(i, j) * erf_term;
    }
  }
  grad /= static_cast<double>(n);
  return grad;
}

Vector noiseless_mae_gradient(const Vector& alpha, const PredictionMatrix& Phi,
                              const Vector& y) {
  check_dims(alpha, Phi, y, nullptr, "noiseless_mae_gradient");
  const Vector mu = Phi * alpha - y;
  Vector sgn(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    sgn(i) = mu(i) > 0.0 ? 1.0 : (mu(i) < 0.0 ? -1.0 : 0.0);
  }
  return (Phi.transpose() * sgn) / static_cast<double>(Phi.rows());
}

AggregationWeights optimize_weights_gd(const PredictionMatrix& Phi, const Vector& y,
                                       const NoiseModel& Sigma, const MaeGdConfig& config) {
  if (config.i_min > config.i_max || config.eta <= 0.0 || config.gamma < 0.0 ||
      config.gamma >= 1.0 || config.tau < 0.0 || config.eps <= 0.0) {
    throw ConfigError("optimize_weights_gd: invalid config");
  }
  const Eigen::Index t = Phi.cols();
  if (Phi.rows() != y.size() || t < 1 ||
      (config.robust && Sigma.size() != t)) {
    throw DimensionError("optimize_weights_gd: inconsistent shapes");
  }

  auto objective = [&](const Vector& a) {
    return config.robust ? expected_mae(a, Phi, y, Sigma) : noiseless_mae(a, Phi, y);
  };
  auto gradient = [&](const Vector& a) {
    return config.robust ? expected_mae_gradient(a, Phi, y, Sigma)
                         : noiseless_mae_gradient(a, Phi, y);
  };

  Vector a = Vector::Constant(t, 1.0 / static_cast<double>(t));
  Vector velocity = Vector::Zero(t);
  Vector accum = Vector::Zero(t);

  double best_obj = objective(a);
  Vector best = a;
  double prev_obj = best_obj;

  for (int i = 1; i <= config.i_max; ++i) {
    const Vector g = gradient(a);
    accum += g.cwiseProduct(g);
    velocity = config.gamma * velocity -
               config.eta * g.cwiseQuotient((accum.array() + config.eps).sqrt().matrix());
    a += velocity;
    const double obj = objective(a);
    if (!std::isfinite(obj)) {
      std::ostringstream msg;
      msg << "optimize_weights_gd: non-finite objective at iteration " << i
          << " (|alpha| = " << a.norm() << ")";
      throw NumericalError(msg.str());
    }
    if (obj < best_obj) {
      best_obj = obj;
      best = a;
    }
    if (std::abs(obj - prev_obj) <= config.tau && i >= config.i_min) break;
    prev_obj = obj;
  }

  AggregationWeights w;
  w.alpha = best;
  w.method = config.robust ? WeightMethod::MaeGd : WeightMethod::MaeGdNonrobust;
  return w;
}

double mae_upper_bound(const PredictionMatrix& Phi, const Vector& y,
                       const NoiseModel& Sigma, MaeUpperMode mode,
                       const Vector* alpha_opt) {
  if (Phi.rows() != y.size() || Sigma.size() != Phi.cols()) {
    throw DimensionError("mae_upper_bound: inconsistent shapes");
  }
  const int t = static_cast<int>(Phi.cols());

  auto generic_at = [&](const Vector& a) {
    return noiseless_mae(a, Phi, y) + std::sqrt((2.0 / M_PI) * std::max(0.0, a.dot(Sigma.cov * a)));
  };

  switch (mode) {
    case MaeUpperMode::Generic: {
      if (alpha_opt == nullptr) throw ConfigError("mae_upper_bound: generic mode needs alpha");
      return generic_at(*alpha_opt);
    }
    case MaeUpperMode::Bem: {
      const Vector uniform = Vector::Constant(t, 1.0 / static_cast<double>(t));
      const double s = Sigma.cov.sum();
      return noiseless_mae(uniform, Phi, y) +
             std::sqrt((2.0 / M_PI) * std::max(0.0, s)) / static_cast<double>(t);
    }
    case MaeUpperMode::MinEig: {
      const GenEigResult ge = min_constrained_quadratic(Sigma.cov);
      return noiseless_mae(ge.vector, Phi, y) +
             std::sqrt((2.0 / M_PI) * std::max(0.0, ge.value));
    }
    case MaeUpperMode::Combined: {
      double best = std::min(mae_upper_bound(Phi, y, Sigma, MaeUpperMode::Bem),
                             mae_upper_bound(Phi, y, Sigma, MaeUpperMode::MinEig));
      if (alpha_opt != nullptr) best = std::min(best, generic_at(*alpha_opt));
      return best;
    }
  }
  throw ConfigError("mae_upper_bound: unknown mode");
}

namespace {

double prop4_noise_sum(const PredictionMatrix& Phi, const Vector& y, double sigma_bar) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < Phi.rows(); ++i) {
    const double mu_bar = (Phi.row(i).transpose() - Vector::Constant(Phi.cols(), y(i)))
                              .cwiseAbs()
                              .maxCoeff();
    const double delta = kSqrt2OverPi * sigma_bar - mu_bar;
    if (delta < 0.0) {
      acc += delta;  // sign'(delta) = 0: plain additive penalty
    } else if (mu_bar > 0.0) {
      acc += delta * std::exp(-mu_bar * mu_bar / (2.0 * sigma_bar * sigma_bar));
    } else {
      acc += delta;  // mu_bar = 0: exponent vanishes
    }
  }
  return acc / static_cast<double>(Phi.rows());
}

}  // namespace

double mae_lower_bound(const PredictionMatrix& Phi, const Vector& y,
                       const NoiseModel& Sigma, const Vector& alpha_dagger) {
  return mae_bounds(Phi, y, Sigma, alpha_dagger).lower;
}

MaeBoundReport mae_bounds(const PredictionMatrix& Phi, const Vector& y,
                          const NoiseModel& Sigma, const Vector& alpha_dagger) {
  check_dims(alpha_dagger, Phi, y, &Sigma, "mae_bounds");
  MaeBoundReport report;

  const double j1_dagger = noiseless_mae(alpha_dagger, Phi, y);
  const double sigma_bar =
      std::sqrt(std::max(0.0, min_constrained_quadratic(Sigma.cov).value));
  const double noise_dominated = j1_dagger + prop4_noise_sum(Phi, y, sigma_bar);
  if (noise_dominated > j1_dagger) {
    report.lower = noise_dominated;
    report.lower_source = MaeBoundReport::LowerSource::NoiseDominated;
  } else {
    report.lower = j1_dagger;
    report.lower_source = MaeBoundReport::LowerSource::Simple;
  }

  const double ub_bem = mae_upper_bound(Phi, y, Sigma, MaeUpperMode::Bem);
  const double ub_mineig = mae_upper_bound(Phi, y, Sigma, MaeUpperMode::MinEig);
  const double ub_generic =
      mae_upper_bound(Phi, y, Sigma, MaeUpperMode::Generic, &alpha_dagger);
  report.upper = ub_bem;
  report.upper_source = MaeBoundReport::UpperSource::Bem;
  if (ub_mineig < report.upper) {
    report.upper = ub_mineig;
    report.upper_source = MaeBoundReport::UpperSource::MinEig;
  }
  if (ub_generic < report.upper) {
    report.upper = ub_generic;
    report.upper_source = MaeBoundReport::UpperSource::Generic;
  }

  if (report.lower > report.upper + 1e-9 * std::max(1.0, std::abs(report.upper))) {
    std::ostringstream msg;
    msg << "mae_bounds: lower bound " << report.lower << " exceeds upper bound "
        << report.upper;
    throw NumericalError(msg.str());
  }
  return report;
}

}  // namespace noisyens
