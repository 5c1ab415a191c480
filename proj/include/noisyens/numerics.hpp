#pragma once

#include <vector>

#include "noisyens/core.hpp"

namespace noisyens {

struct QuadraticCoeffs {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

/// Minimizer of alpha' S alpha over alpha with 1'alpha = 1, and its value.
struct GenEigResult {
  double value = 0.0;
  Vector vector;
};

/// Solve A x = b for symmetric positive-definite A via Cholesky.
/// One diagonal-jitter retry (1e-10 * trace / T) before giving up.
Vector solve_spd(const Matrix& A, const Vector& b);

/// min alpha' S alpha subject to 1'alpha = 1, via the equality-constrained
/// KKT system, with a minimum-norm fallback when S is singular. Also the
/// minimal generalized eigenvalue of the pair (S, 11').
GenEigResult min_constrained_quadratic(const Matrix& S);

/// Coefficients of the quadratic in lambda obtained by expanding
/// y' Phi Z' Sigma Z Phi' y = C with Z = (I + lambda (Phi'Phi)^-1 Sigma) (Phi'Phi)^-1.
///
/// With u = (Phi'Phi)^-1 Phi' y and r = (Phi'Phi)^-1 Sigma u the expansion is
/// exact: a = r'Sigma r, b = 2 u'Sigma r, c = u'Sigma u - C.
QuadraticCoeffs lambda_polynomial(const PredictionMatrix& Phi, const NoiseModel& Sigma,
                                  const Vector& y, double C);

/// Debug view: the expansion-derived coefficients next to a compact variant
/// that uses Phi' y where the expansion carries (Phi'Phi)^-1 Phi' y. The two
/// agree exactly when Phi'Phi = I.
struct LambdaPolyDebug {
  QuadraticCoeffs expanded;
  QuadraticCoeffs compact;
  double max_rel_discrepancy = 0.0;
};

LambdaPolyDebug lambda_polynomial_debug(const PredictionMatrix& Phi, const NoiseModel& Sigma,
                                        const Vector& y, double C);

/// Real roots of a x^2 + b x + c, ascending. Linear when a = 0. Empty when
/// there is no real root (including the degenerate a = b = 0, c != 0 case,
/// which is the no-root signal callers fall back on).
std::vector<double> quadratic_roots(const QuadraticCoeffs& q);

struct NormalFuncs {
  double pdf = 0.0;
  double cdf = 0.0;
};

/// Standard normal density and cumulative value; cdf via erfc, absolute
/// error below 1e-12.
NormalFuncs normal_funcs(double t);

/// Mean of |X| for X ~ N(mu, sigma^2); the exact absolute residual when
/// sigma = 0.
double folded_normal_mean(double mu, double sigma);

}  // namespace noisyens
