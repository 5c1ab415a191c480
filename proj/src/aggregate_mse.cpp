#include "noisyens/aggregate_mse.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace noisyens {

namespace {

void check_dims(const PredictionMatrix& Phi, const Vector& y, const NoiseModel* Sigma,
                const char* who) {
  if (Phi.rows() != y.size()) {
    throw DimensionError(std::string(who) + ": Phi rows != |y|");
  }
  if (Phi.cols() < 1) throw DimensionError(std::string(who) + ": T must be >= 1");
  if (Sigma != nullptr && Sigma->size() != Phi.cols()) {
    throw DimensionError(std::string(who) + ": Sigma size != T");
  }
}

/// Groups of column indices with bitwise-identical prediction columns.
/// group_of[t] maps each column to its representative's group.
struct DuplicateGroups {
  std::vector<std::vector<int>> groups;  // one entry per unique column
  bool any_duplicates = false;
};

DuplicateGroups find_duplicate_columns(const PredictionMatrix& Phi) {
  DuplicateGroups out;
  const int t_count = static_cast<int>(Phi.cols());
  std::vector<int> rep(t_count, -1);
  for (int t = 0; t < t_count; ++t) {
    bool matched = false;
    for (auto& g : out.groups) {
      if (Phi.col(g.front()) == Phi.col(t)) {
        g.push_back(t);
        matched = true;
        out.any_duplicates = true;
        break;
      }
    }
    if (!matched) out.groups.push_back({t});
  }
  return out;
}

Vector min_norm_solve(const Matrix& M, const Vector& b, const char* who) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(M);
  Vector x = cod.solve(b);
  if (!x.allFinite()) throw SingularityError(std::string(who) + ": singular system");
  return x;
}

/// KKT solve for min |Phi a - y|^2 s.t. 1'a = 1, with one jitter retry.
Vector gem_kkt(const Matrix& gram, const Vector& phity, bool jittered) {
  const Eigen::Index t = gram.rows();
  Matrix kkt = Matrix::Zero(t + 1, t + 1);
  kkt.topLeftCorner(t, t) = 2.0 * gram;
  kkt.topRightCorner(t, 1).setOnes();
  kkt.bottomLeftCorner(1, t).setOnes();
  Vector rhs = Vector::Zero(t + 1);
  rhs.head(t) = 2.0 * phity;
  rhs(t) = 1.0;

  Eigen::PartialPivLU<Matrix> lu(kkt);
  Vector sol = lu.solve(rhs);
  const double scale = 1.0 + rhs.cwiseAbs().maxCoeff() + kkt.cwiseAbs().maxCoeff();
  if (sol.allFinite() && (kkt * sol - rhs).cwiseAbs().maxCoeff() <= 1e-7 * scale) {
    return sol.head(t);
  }
  if (!jittered) {
    Matrix g = gram;
    g.diagonal().array() += 1e-10 * gram.trace() / static_cast<double>(t);
    return gem_kkt(g, phity, true);
  }
  throw SingularityError("gem_weights: degenerate KKT system after jitter");
}

}  // namespace

AggregationWeights bem_weights(int T) {
  if (T < 1) throw DimensionError("bem_weights: T must be >= 1");
  AggregationWeights w;
  w.alpha = Vector::Constant(T, 1.0 / static_cast<double>(T));
  w.method = WeightMethod::Bem;
  return w;
}

AggregationWeights gem_weights(const PredictionMatrix& Phi, const Vector& y) {
  check_dims(Phi, y, nullptr, "gem_weights");
  const int t_count = static_cast<int>(Phi.cols());
  AggregationWeights w;
  w.method = WeightMethod::Gem;
  if (t_count == 1) {
    w.alpha = Vector::Ones(1);  // the constraint forces it
    return w;
  }

  // Exactly coinciding columns (bagged stumps) make the KKT system singular
  // with an arbitrary pivot-dependent split; collapse them first and share
  // each weight equally afterwards.
  const DuplicateGroups dup = find_duplicate_columns(Phi);
  if (dup.any_duplicates) {
    const int u_count = static_cast<int>(dup.groups.size());
    PredictionMatrix reduced(Phi.rows(), u_count);
    for (int j = 0; j < u_count; ++j) reduced.col(j) = Phi.col(dup.groups[j].front());
    const AggregationWeights rw = gem_weights(reduced, y);
    w.alpha = Vector::Zero(t_count);
    for (int j = 0; j < u_count; ++j) {
      const double share = rw.alpha(j) / static_cast<double>(dup.groups[j].size());
      for (int member : dup.groups[j]) w.alpha(member) = share;
    }
    return w;
  }

  const Matrix gram = Phi.transpose() * Phi;
  const Vector phity = Phi.transpose() * y;
  w.alpha = gem_kkt(gram, phity, false);
  const double sum = w.alpha.sum();
  if (!w.alpha.allFinite() || std::abs(sum - 1.0) > 1e-8) {
    throw SingularityError("gem_weights: constraint not met by KKT solution");
  }
  w.alpha /= sum;
  return w;
}

AggregationWeights tem_weights(const PredictionMatrix& Phi, const Vector& y,
                               const NoiseModel& Sigma, double lambda) {
  check_dims(Phi, y, &Sigma, "tem_weights");
  if (lambda < 0.0) throw ConfigError("tem_weights: lambda must be non-negative");

  AggregationWeights w;
  w.method = WeightMethod::Tem;

  const DuplicateGroups dup = find_duplicate_columns(Phi);
  if (dup.any_duplicates) {
    const int u_count = static_cast<int>(dup.groups.size());
    PredictionMatrix reduced(Phi.rows(), u_count);
    Matrix sigma_r(u_count, u_count);
    for (int j = 0; j < u_count; ++j) reduced.col(j) = Phi.col(dup.groups[j].front());
    for (int j = 0; j < u_count; ++j) {
      for (int l = 0; l < u_count; ++l) {
        sigma_r(j, l) = Sigma.cov(dup.groups[j].front(), dup.groups[l].front());
      }
    }
    NoiseModel reduced_sigma;
    reduced_sigma.cov = sigma_r;
    const AggregationWeights rw = tem_weights(reduced, y, reduced_sigma, lambda);
    w.alpha = Vector::Zero(Phi.cols());
    for (int j = 0; j < u_count; ++j) {
      const double share = rw.alpha(j) / static_cast<double>(dup.groups[j].size());
      for (int member : dup.groups[j]) w.alpha(member) = share;
    }
    return w;
  }

  const double n_s = static_cast<double>(Phi.rows());
  const Matrix M = Phi.transpose() * Phi + lambda * n_s * Sigma.cov;
  const Vector b = Phi.transpose() * y;
  try {
    w.alpha = solve_spd(M, b);
  } catch (const SingularityError&) {
    // Minimum-norm least-squares solution; the lambda = 0 pseudo-inverse case.
    w.alpha = min_norm_solve(M, b, "tem_weights");
  }
  return w;
}

ExpectedMse expected_mse(const AggregationWeights& alpha, const PredictionMatrix& Phi,
                         const Vector& y, const NoiseModel& Sigma, double lambda) {
  check_dims(Phi, y, &Sigma, "expected_mse");
  if (alpha.alpha.size() != Phi.cols()) {
    throw DimensionError("expected_mse: alpha length != T");
  }
  ExpectedMse out;
  out.model_term = (Phi * alpha.alpha - y).squaredNorm() / static_cast<double>(Phi.rows());
  out.noise_term = alpha.alpha.dot(Sigma.cov * alpha.alpha);
  out.total = out.model_term + lambda * out.noise_term;
  return out;
}

TemSolution solve_lambda_for_constraint(const PredictionMatrix& Phi, const Vector& y,
                                        const NoiseModel& Sigma, double C) {
  check_dims(Phi, y, &Sigma, "solve_lambda_for_constraint");
  if (!(C > 0.0)) throw ConfigError("solve_lambda_for_constraint: C must be positive");

  auto eval = [&](double lambda) {
    AggregationWeights w = tem_weights(Phi, y, Sigma, lambda);
    const double v = w.alpha.dot(Sigma.cov * w.alpha);
    return std::make_pair(std::move(w), v);
  };

  auto monotonicity_abort = [](double l0, double v0, double l1, double v1) {
    std::ostringstream msg;
    msg << "solve_lambda_for_constraint: constraint value increased along lambda ("
        << "h(" << l0 << ") = " << v0 << " -> h(" << l1 << ") = " << v1
        << "); bisection assumption violated";
    throw NumericalError(msg.str());
  };

  auto [w0, v0] = eval(0.0);
  const double tol = 1e-6 * std::max(1.0, C);
  if (v0 <= C) {
    return TemSolution{std::move(w0), 0.0, v0, false};  // KKT: lambda = 0 branch
  }

  // Bracket: double lambda until the constraint is satisfied.
  double lo = 0.0;
  double v_lo = v0;
  double hi = 1.0;
  auto [w_hi, v_hi] = eval(hi);
  int doublings = 0;
  while (v_hi > C) {
    if (v_hi > v_lo * (1.0 + 1e-9) + 1e-300) monotonicity_abort(lo, v_lo, hi, v_hi);
    if (++doublings > 200) {
      throw NumericalError("solve_lambda_for_constraint: bracket doubling failed");
    }
    lo = hi;
    v_lo = v_hi;
    hi *= 2.0;
    std::tie(w_hi, v_hi) = eval(hi);
  }
  if (v_hi > v_lo * (1.0 + 1e-9) + 1e-300) monotonicity_abort(lo, v_lo, hi, v_hi);
  if (std::abs(v_hi - C) <= tol) {
    return TemSolution{std::move(w_hi), hi, v_hi, true};
  }

  for (int step = 0; step < 200; ++step) {
    const double mid = 0.5 * (lo + hi);
    auto [w_mid, v_mid] = eval(mid);
    if (v_mid > v_lo * (1.0 + 1e-9) + 1e-300) monotonicity_abort(lo, v_lo, mid, v_mid);
    if (std::abs(v_mid - C) <= tol) {
      return TemSolution{std::move(w_mid), mid, v_mid, true};
    }
    if (v_mid > C) {
      lo = mid;
      v_lo = v_mid;
    } else {
      hi = mid;
    }
  }
  throw NumericalError("solve_lambda_for_constraint: no convergence after 200 bisection steps");
}

std::optional<double> approx_lambda(const PredictionMatrix& Phi, const Vector& y,
                                    const NoiseModel& Sigma, double C) {
  check_dims(Phi, y, &Sigma, "approx_lambda");
  if (!(C > 0.0)) throw ConfigError("approx_lambda: C must be positive");

  const QuadraticCoeffs q = lambda_polynomial(Phi, Sigma, y, C);
  const std::vector<double> roots = quadratic_roots(q);
  if (roots.empty()) return std::nullopt;

  // The quadratic solves the plus-sign expansion without the N_s scaling
  // the exact multiplier carries, so both the root magnitude and its N_s
  // rescale are screened as candidates; the realized constraint value
  // decides which, if either, is usable.
  const double n_s = static_cast<double>(Phi.rows());
  std::vector<double> candidates;
  for (double r : roots) {
    candidates.push_back(std::abs(r));
    candidates.push_back(std::abs(r) / n_s);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // Largest eigenvalue of (Phi'Phi)^-1 Sigma, for the contraction screen.
  const Matrix gram = Phi.transpose() * Phi;
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(Sigma.cov, gram);
  if (ges.info() != Eigen::Success) {
    throw SingularityError("approx_lambda: Phi'Phi not positive definite");
  }
  const double spectral = ges.eigenvalues().maxCoeff();

  for (double lambda : candidates) {
    if (lambda * spectral >= 1.0) continue;  // Neumann expansion not contractive
    const AggregationWeights w = tem_weights(Phi, y, Sigma, lambda);
    const double v = w.alpha.dot(Sigma.cov * w.alpha);
    if (std::abs(v - C) <= 0.25 * C) return lambda;
  }
  return std::nullopt;
}

}  // namespace noisyens
