#include "noisyens/numerics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>

namespace noisyens {

namespace {

constexpr double kSqrt2OverPi = 0.79788456080286535588;  // sqrt(2/pi)

void check_square_match(const Matrix& A, const Vector& b, const char* who) {
  if (A.rows() != A.cols()) throw DimensionError(std::string(who) + ": matrix not square");
  if (A.rows() != b.size()) throw DimensionError(std::string(who) + ": rhs length mismatch");
}

}  // namespace

Vector solve_spd(const Matrix& A, const Vector& b) {
  check_square_match(A, b, "solve_spd");
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * A.trace() / static_cast<double>(A.rows());
    Matrix Aj = A;
    Aj.diagonal().array() += jitter;
    llt.compute(Aj);
    if (llt.info() != Eigen::Success) {
      throw SingularityError("solve_spd: matrix not positive definite after jitter retry");
    }
  }
  Vector x = llt.solve(b);
  x += llt.solve(b - A * x);  // one refinement step
  if (!x.allFinite()) {
    throw SingularityError("solve_spd: non-finite solution");
  }
  return x;
}

GenEigResult min_constrained_quadratic(const Matrix& S) {
  if (S.size() == 0 || S.rows() != S.cols()) {
    throw DimensionError("min_constrained_quadratic: S not square or empty");
  }
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw DimensionError("min_constrained_quadratic: S not symmetric");
  }
  const Eigen::Index t = S.rows();

  // KKT system for min a'Sa s.t. 1'a = 1:  [2S 1; 1' 0] [a; nu] = [0; 1].
  Matrix kkt = Matrix::Zero(t + 1, t + 1);
  kkt.topLeftCorner(t, t) = 2.0 * S;
  kkt.topRightCorner(t, 1).setOnes();
  kkt.bottomLeftCorner(1, t).setOnes();
  Vector rhs = Vector::Zero(t + 1);
  rhs(t) = 1.0;

  Vector sol;
  Eigen::PartialPivLU<Matrix> lu(kkt);
  sol = lu.solve(rhs);
  const bool lu_ok = sol.allFinite() && (kkt * sol - rhs).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + scale);
  if (!lu_ok) {
    // Singular S (duplicate channels, zero noise): minimum-norm KKT solution.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
    sol = cod.solve(rhs);
  }

  GenEigResult result;
  result.vector = sol.head(t);
  const double sum = result.vector.sum();
  if (!result.vector.allFinite() || std::abs(sum - 1.0) > 1e-8) {
    throw SingularityError("min_constrained_quadratic: KKT system inconsistent");
  }
  result.vector /= sum;  // tighten 1'a = 1 to working precision
  result.value = result.vector.dot(S * result.vector);
  return result;
}

QuadraticCoeffs lambda_polynomial(const PredictionMatrix& Phi, const NoiseModel& Sigma,
                                  const Vector& y, double C) {
  if (Phi.rows() != y.size()) throw DimensionError("lambda_polynomial: Phi rows != |y|");
  if (Sigma.size() != Phi.cols()) throw DimensionError("lambda_polynomial: Sigma size != T");
  const Matrix gram = Phi.transpose() * Phi;
  const Vector w = Phi.transpose() * y;
  Eigen::PartialPivLU<Matrix> lu(gram);
  const Vector u = lu.solve(w);
  if (!u.allFinite() || (gram * u - w).cwiseAbs().maxCoeff() > 1e-6 * (1.0 + w.cwiseAbs().maxCoeff())) {
    throw SingularityError("lambda_polynomial: Phi'Phi singular");
  }
  const Vector su = Sigma.cov * u;
  const Vector r = lu.solve(su);

  QuadraticCoeffs q;
  q.a = r.dot(Sigma.cov * r);
  q.b = 2.0 * u.dot(Sigma.cov * r);
  q.c = u.dot(su) - C;
  return q;
}

LambdaPolyDebug lambda_polynomial_debug(const PredictionMatrix& Phi, const NoiseModel& Sigma,
                                        const Vector& y, double C) {
  LambdaPolyDebug dbg;
  dbg.expanded = lambda_polynomial(Phi, Sigma, y, C);

  const Matrix gram = Phi.transpose() * Phi;
  const Vector w = Phi.transpose() * y;
  Eigen::PartialPivLU<Matrix> lu(gram);
  const Vector sw = Sigma.cov * w;
  const Vector gsw = lu.solve(sw);
  dbg.compact.a = sw.dot(lu.solve(Sigma.cov * gsw));
  dbg.compact.b = 2.0 * sw.dot(gsw);
  dbg.compact.c = w.dot(sw) - C;

  auto rel = [](double lhs, double rhs) {
    const double denom = std::max({1e-300, std::abs(lhs), std::abs(rhs)});
    return std::abs(lhs - rhs) / denom;
  };
  dbg.max_rel_discrepancy = std::max({rel(dbg.expanded.a, dbg.compact.a),
                                      rel(dbg.expanded.b, dbg.compact.b),
                                      rel(dbg.expanded.c, dbg.compact.c)});
  return dbg;
}

std::vector<double> quadratic_roots(const QuadraticCoeffs& q) {
  std::vector<double> roots;
  if (q.a == 0.0) {
    if (q.b == 0.0) {
      return roots;  // no-root signal; constant equation
    }
    roots.push_back(-q.c / q.b);
    return roots;
  }
  const double disc = q.b * q.b - 4.0 * q.a * q.c;
  if (disc < 0.0) return roots;
  if (disc == 0.0) {
    roots.push_back(-q.b / (2.0 * q.a));
    return roots;
  }
  // Citardauq form for the small root to avoid cancellation.
  const double s = std::sqrt(disc);
  const double qq = -0.5 * (q.b + (q.b >= 0.0 ? s : -s));
  roots.push_back(qq / q.a);
  roots.push_back(q.c / qq);
  std::sort(roots.begin(), roots.end());
  return roots;
}

NormalFuncs normal_funcs(double t) {
  NormalFuncs f;
  f.pdf = std::exp(-0.5 * t * t) * 0.39894228040143267794;  // 1/sqrt(2 pi)
  f.cdf = 0.5 * std::erfc(-t * 0.70710678118654752440);
  return f;
}

double folded_normal_mean(double mu, double sigma) {
  if (sigma <= 0.0) return std::abs(mu);
  const double rho = mu / sigma;
  return kSqrt2OverPi * sigma * std::exp(-0.5 * rho * rho) +
         mu * std::erf(rho * 0.70710678118654752440);
}

}  // namespace noisyens
