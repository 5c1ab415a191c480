#include "noisyens/gradboost.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "noisyens/numerics.hpp"

namespace noisyens {

namespace {

constexpr double kSqrt2OverPi = 0.79788456080286535588;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kInvSqrt2 = 0.70710678118654752440;

void check_stage_dims(const Vector& phi_t, const Vector& y, const Vector& f_hat_prev,
                      const NoiseModel& Sigma, const Vector& alpha_prefix, int t,
                      const char* who) {
  if (t < 1) throw DimensionError(std::string(who) + ": stage index must be >= 1");
  if (phi_t.size() != y.size() || phi_t.size() != f_hat_prev.size()) {
    throw DimensionError(std::string(who) + ": sample-length mismatch");
  }
  if (alpha_prefix.size() != t - 1) {
    throw DimensionError(std::string(who) + ": alpha prefix length != t-1");
  }
  if (Sigma.size() < t) {
    throw DimensionError(std::string(who) + ": Sigma smaller than stage index");
  }
}

/// Derivative of the scalar expected-MAE stage loss. One-sided at the
/// |alpha| kink, which is all bracketing and bisection need.
double stage_mae_derivative(double alpha, const Vector& phi_t, const Vector& omega,
                            double sigma_t) {
  const Eigen::Index n = phi_t.size();
  const double sgn_a = alpha > 0.0 ? 1.0 : (alpha < 0.0 ? -1.0 : 0.0);
  const double s = std::abs(alpha) * sigma_t;
  double acc = 0.0;
  if (s < 1e-300) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = alpha * phi_t(i) - omega(i);
      acc += phi_t(i) * (mu > 0.0 ? 1.0 : (mu < 0.0 ? -1.0 : 0.0));
    }
    return acc / static_cast<double>(n) + kSqrt2OverPi * sigma_t * sgn_a;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = alpha * phi_t(i) - omega(i);
    const double rho = mu / s;
    const double rho2 = rho * rho;
    const double erf_term = std::erf(rho * kInvSqrt2);
    if (rho2 < 1400.0) {
      const double e = std::exp(-0.5 * rho2);
      const double rho_prime = phi_t(i) / s - rho * sigma_t * sgn_a / s;
      acc += kSqrt2OverPi * e * (sigma_t * sgn_a - s * rho * rho_prime) +
             phi_t(i) * erf_term + 2.0 * mu * kInvSqrt2Pi * e * rho_prime;
    } else {
      acc += phi_t(i) * erf_term;
    }
  }
  return acc / static_cast<double>(n);
}

/// Golden-section localization followed by derivative bisection on a convex
/// scalar objective. The initial interval is expanded (up to 60 doublings)
/// until the derivative brackets zero.
double minimize_stage_mae(const Vector& phi_t, const Vector& omega, double sigma_t,
                          double lo, double hi) {
  auto F = [&](double a) { return gb_stage_expected_mae(a, phi_t, omega, sigma_t); };
  auto D = [&](double a) { return stage_mae_derivative(a, phi_t, omega, sigma_t); };

  if (!(lo < hi)) {
    lo -= 0.5;
    hi += 0.5;
  }
  int expansions = 0;
  while (D(lo) > 0.0) {
    const double w = hi - lo;
    hi = lo;
    lo -= 2.0 * w;
    if (++expansions > 60) {
      throw NumericalError("robust_alpha_mae: bracket expansion failure (left)");
    }
  }
  while (D(hi) < 0.0) {
    const double w = hi - lo;
    lo = hi;
    hi += 2.0 * w;
    if (++expansions > 60) {
      throw NumericalError("robust_alpha_mae: bracket expansion failure (right)");
    }
  }

  // Golden-section down to a small relative width.
  const double inv_phi = 0.61803398874989484820;
  const double width_tol = 1e-6 * std::max({1.0, std::abs(lo), std::abs(hi)});
  double a = hi - inv_phi * (hi - lo);
  double b = lo + inv_phi * (hi - lo);
  double fa = F(a);
  double fb = F(b);
  while (hi - lo > width_tol) {
    if (fa <= fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = F(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = F(b);
    }
  }

  // Derivative bisection polish; convexity keeps the sign bracket valid.
  double d_lo = D(lo);
  if (d_lo > 0.0) return lo;
  for (int step = 0; step < 80 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++step) {
    const double mid = 0.5 * (lo + hi);
    if (D(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

const char* to_string(GbLoss loss) { return loss == GbLoss::Mse ? "mse" : "mae"; }

double GradBoostModel::predict(const Vector& x) const {
  double acc = 0.0;
  for (const GbStage& s : stages) acc += s.alpha * tree_predict(s.tree, x);
  return acc;
}

Vector GradBoostModel::stage_alphas() const {
  Vector a(size());
  for (int t = 0; t < size(); ++t) a(t) = stages[t].alpha;
  return a;
}

Vector negative_gradient(GbLoss loss, const Vector& y, const Vector& f_hat) {
  if (y.size() != f_hat.size()) throw DimensionError("negative_gradient: length mismatch");
  Vector g(y.size());
  if (loss == GbLoss::Mse) {
    g = 2.0 * (y - f_hat);
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double r = y(i) - f_hat(i);
      g(i) = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    }
  }
  return g;
}

double gb_stage_expected_mse(double alpha, const Vector& phi_t, const Vector& residual,
                             const NoiseModel& Sigma, const Vector& alpha_prefix, int t) {
  const double n = static_cast<double>(phi_t.size());
  const double fit = (residual - alpha * phi_t).squaredNorm() / n;
  double prior_var = 0.0;
  for (int a = 0; a < t - 1; ++a) {
    for (int b = 0; b < t - 1; ++b) {
      prior_var += alpha_prefix(a) * alpha_prefix(b) * Sigma.cov(a, b);
    }
  }
  double cross = 0.0;
  for (int a = 0; a < t - 1; ++a) cross += alpha_prefix(a) * Sigma.cov(t - 1, a);
  const double sigma2_t = Sigma.cov(t - 1, t - 1);
  return fit + prior_var - 2.0 * alpha * cross + alpha * alpha * sigma2_t;
}

double gb_stage_expected_mae(double alpha, const Vector& phi_t, const Vector& omega,
                             double sigma_t) {
  const double s = std::abs(alpha) * sigma_t;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < phi_t.size(); ++i) {
    acc += folded_normal_mean(alpha * phi_t(i) - omega(i), s);
  }
  return acc / static_cast<double>(phi_t.size());
}

double robust_alpha_mse(const Vector& phi_t, const Vector& y, const Vector& f_hat_prev,
                        const NoiseModel& Sigma, const Vector& alpha_prefix, int t) {
  check_stage_dims(phi_t, y, f_hat_prev, Sigma, alpha_prefix, t, "robust_alpha_mse");
  const double n = static_cast<double>(phi_t.size());
  double num = phi_t.dot(y - f_hat_prev) / n;
  for (int a = 0; a < t - 1; ++a) num += alpha_prefix(a) * Sigma.cov(t - 1, a);
  const double den = Sigma.cov(t - 1, t - 1) + phi_t.squaredNorm() / n;
  if (den <= 0.0) {
    throw NumericalError("robust_alpha_mse: zero denominator (no noise and phi_t == 0)");
  }
  return num / den;
}

double robust_alpha_mae(const Vector& phi_t, const Vector& y, const Vector& f_hat_prev,
                        const NoiseModel& Sigma, const Vector& alpha_prefix, int t) {
  check_stage_dims(phi_t, y, f_hat_prev, Sigma, alpha_prefix, t, "robust_alpha_mae");
  const Vector omega = y - f_hat_prev;
  const double sigma_t = std::sqrt(std::max(0.0, Sigma.cov(t - 1, t - 1)));

  double lo, hi;
  if (t == 1) {
    lo = omega.minCoeff();  // the first stage is constant, so target range
    hi = omega.maxCoeff();
  } else {
    const double sq = phi_t.squaredNorm();
    const double center = sq > 0.0 ? phi_t.dot(omega) / sq : 0.0;
    const double half = 1.0 + std::abs(center);
    lo = center - half;
    hi = center + half;
  }
  return minimize_stage_mae(phi_t, omega, sigma_t, lo, hi);
}

GradBoostModel fit_gradboost(const Dataset& dataset, int T, const NoiseModel& Sigma,
                             GbLoss loss, const GbTreeParams& tree_params, bool robust) {
  if (T < 1) throw ConfigError("fit_gradboost: T must be >= 1");
  if (tree_params.max_depth < 0 || tree_params.min_leaf < 1) {
    throw ConfigError("fit_gradboost: invalid tree parameters");
  }
  if (robust && Sigma.size() < T) {
    throw DimensionError("fit_gradboost: Sigma must be at least T x T when robust");
  }
  const NoiseModel sigma_eff = robust ? Sigma : NoiseModel::zero(T);

  const Eigen::Index n = dataset.n_samples();
  const int u = static_cast<int>(dataset.n_features());
  GradBoostModel model;
  model.loss = loss;
  model.sigma = sigma_eff;
  model.robust = robust;
  model.stages.reserve(T);

  Vector f_hat = Vector::Zero(n);
  Vector alphas(0);

  const Vector ones = Vector::Ones(n);
  const double alpha1 =
      loss == GbLoss::Mse
          ? robust_alpha_mse(ones, dataset.targets, f_hat, sigma_eff, alphas, 1)
          : robust_alpha_mae(ones, dataset.targets, f_hat, sigma_eff, alphas, 1);
  model.stages.push_back(GbStage{constant_tree(1.0, u), alpha1});
  f_hat.array() += alpha1;

  for (int t = 2; t <= T; ++t) {
    Vector g = negative_gradient(loss, dataset.targets, f_hat);
    // The channel carries the raw tree output, so squared-loss stage trees
    // are fit at residual amplitude rather than the gradient's 2x scale;
    // the stage coefficient absorbs any constant factor in the noiseless
    // model either way.
    if (loss == GbLoss::Mse) g *= 0.5;
    Dataset grad_target(dataset.features, g, dataset.name);
    RegressionTree tree = fit_tree(grad_target, tree_params.max_depth, tree_params.min_leaf);
    Vector phi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      phi(i) = tree_predict(tree, dataset.features.row(i));
    }
    alphas = model.stage_alphas();
    // A converged model yields a zero gradient tree; with no channel noise the
    // stage objective is flat and alpha = 0 is the deterministic choice.
    const bool degenerate_stage =
        sigma_eff.cov(t - 1, t - 1) <= 0.0 && phi.squaredNorm() == 0.0;
    const double alpha_t =
        degenerate_stage ? 0.0
        : loss == GbLoss::Mse
            ? robust_alpha_mse(phi, dataset.targets, f_hat, sigma_eff, alphas, t)
            : robust_alpha_mae(phi, dataset.targets, f_hat, sigma_eff, alphas, t);
    model.stages.push_back(GbStage{std::move(tree), alpha_t});
    f_hat += alpha_t * phi;
  }
  return model;
}

PredictionMatrix build_prediction_matrix(const GradBoostModel& model,
                                         const Dataset& dataset) {
  if (model.stages.empty()) throw DimensionError("build_prediction_matrix: empty model");
  PredictionMatrix phi(dataset.n_samples(), model.size());
  for (Eigen::Index i = 0; i < dataset.n_samples(); ++i) {
    const Vector row = dataset.features.row(i);
    for (int t = 0; t < model.size(); ++t) {
      phi(i, t) = tree_predict(model.stages[t].tree, row);
    }
  }
  return phi;
}

void save_gradboost(const GradBoostModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("save_gradboost: cannot open '" + path + "'");
  out << std::setprecision(17);
  out << "NOISYENS-GB 1\n";
  out << "loss " << to_string(model.loss) << "\n";
  out << "robust " << (model.robust ? 1 : 0) << "\n";
  out << "stages " << model.size() << "\n";
  const int u = model.stages.empty() ? 0 : model.stages.front().tree.n_features;
  out << "n_features " << u << "\n";
  out << "sigma " << model.sigma.cov.rows() << "\n";
  for (Eigen::Index i = 0; i < model.sigma.cov.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.sigma.cov.cols(); ++j) {
      out << model.sigma.cov(i, j) << (j + 1 == model.sigma.cov.cols() ? "" : " ");
    }
    out << "\n";
  }
  for (int t = 0; t < model.size(); ++t) {
    const GbStage& s = model.stages[t];
    out << "stage " << (t + 1) << " alpha " << s.alpha << " nodes " << s.tree.nodes.size()
        << "\n";
    for (const TreeNode& nd : s.tree.nodes) {
      out << nd.feature << " " << nd.threshold << " " << nd.left << " " << nd.right << " "
          << nd.value << "\n";
    }
  }
  out << "end\n";
  if (!out) throw ConfigError("save_gradboost: write failure on '" + path + "'");
}

GradBoostModel load_gradboost(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_gradboost: cannot open '" + path + "'");
  auto fail = [&](const std::string& what) -> void {
    throw ConfigError("load_gradboost: " + what + " in '" + path + "'");
  };

  std::string word;
  int version = 0;
  in >> word >> version;
  if (word != "NOISYENS-GB" || version != 1) fail("bad header");

  GradBoostModel model;
  std::string loss_name;
  int robust_flag = 0, stage_count = 0, n_features = 0;
  Eigen::Index sigma_dim = 0;
  in >> word >> loss_name;
  if (word != "loss" || (loss_name != "mse" && loss_name != "mae")) fail("bad loss line");
  model.loss = loss_name == "mse" ? GbLoss::Mse : GbLoss::Mae;
  in >> word >> robust_flag;
  if (word != "robust") fail("bad robust line");
  model.robust = robust_flag != 0;
  in >> word >> stage_count;
  if (word != "stages" || stage_count < 1) fail("bad stages line");
  in >> word >> n_features;
  if (word != "n_features" || n_features < 1) fail("bad n_features line");
  in >> word >> sigma_dim;
  if (word != "sigma" || sigma_dim < 0) fail("bad sigma line");
  Matrix cov(sigma_dim, sigma_dim);
  for (Eigen::Index i = 0; i < sigma_dim; ++i) {
    for (Eigen::Index j = 0; j < sigma_dim; ++j) {
      if (!(in >> cov(i, j))) fail("short sigma block");
    }
  }
  model.sigma.cov = cov;

  model.stages.reserve(stage_count);
  for (int t = 0; t < stage_count; ++t) {
    int stage_no = 0;
    std::size_t node_count = 0;
    GbStage stage;
    in >> word >> stage_no;
    if (word != "stage" || stage_no != t + 1) fail("bad stage index");
    in >> word >> stage.alpha;
    if (word != "alpha") fail("bad alpha field");
    in >> word >> node_count;
    if (word != "nodes" || node_count < 1) fail("bad node count");
    stage.tree.n_features = n_features;
    stage.tree.nodes.resize(node_count);
    for (TreeNode& nd : stage.tree.nodes) {
      if (!(in >> nd.feature >> nd.threshold >> nd.left >> nd.right >> nd.value)) {
        fail("short node list");
      }
    }
    model.stages.push_back(std::move(stage));
  }
  in >> word;
  if (word != "end") fail("missing end marker");
  return model;
}

}  // namespace noisyens
