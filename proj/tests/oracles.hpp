// Test-only reference implementations: deliberately simple, independent of
// the library code paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "noisyens/core.hpp"
#include "noisyens/rng.hpp"

namespace oracles {

using noisyens::CounterRng;
using noisyens::Matrix;
using noisyens::Vector;

/// erf via its Maclaurin series; good to ~1e-15 for |x| <= 3.
inline double erf_series(double x) {
  const double x2 = x * x;
  double term = x;
  double sum = x;
  for (int n = 1; n < 80; ++n) {
    term *= -x2 / n;
    sum += term / (2 * n + 1);
  }
  return sum * 1.1283791670955125739;  // 2/sqrt(pi)
}

/// Plain indexed loop; no BLAS, no Eigen expressions.
inline double dot_loop(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a(i) * b(i);
  return s;
}

/// Dense 1-d grid argmin with window refinement.
inline double grid_min_1d(const std::function<double(double)>& f, double lo, double hi,
                          int points, int refinements) {
  double best_x = lo;
  for (int pass = 0; pass < refinements; ++pass) {
    const double step = (hi - lo) / (points - 1);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
      const double x = lo + i * step;
      const double v = f(x);
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
    lo = best_x - 2.0 * step;
    hi = best_x + 2.0 * step;
  }
  return best_x;
}

/// Coordinate-box grid argmin with shrinking windows; exponential in dim,
/// fine for dim <= 3.
inline Vector grid_min_nd(const std::function<double(const Vector&)>& f, int dim,
                          double lo, double hi, int points, int refinements) {
  Vector lo_v = Vector::Constant(dim, lo);
  Vector hi_v = Vector::Constant(dim, hi);
  Vector best_x = 0.5 * (lo_v + hi_v);
  for (int pass = 0; pass < refinements; ++pass) {
    const Vector step = (hi_v - lo_v) / (points - 1);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> idx(dim, 0);
    while (true) {
      Vector x(dim);
      for (int d = 0; d < dim; ++d) x(d) = lo_v(d) + idx[d] * step(d);
      const double v = f(x);
      if (v < best) {
        best = v;
        best_x = x;
      }
      int d = 0;
      while (d < dim && ++idx[d] == points) {
        idx[d] = 0;
        ++d;
      }
      if (d == dim) break;
    }
    lo_v = best_x - 2.0 * step;
    hi_v = best_x + 2.0 * step;
  }
  return best_x;
}

/// Central finite differences, one column per coordinate.
inline Vector central_diff(const std::function<double(const Vector&)>& f, const Vector& x,
                           double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline Matrix rand_matrix(CounterRng& rng, int rows, int cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = lo + (hi - lo) * rng.next_double();
  }
  return m;
}

inline Vector rand_vector(CounterRng& rng, int n, double lo, double hi) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = lo + (hi - lo) * rng.next_double();
  return v;
}

/// A A' + ridge I: symmetric positive definite.
inline Matrix rand_spd(CounterRng& rng, int n, double ridge) {
  const Matrix a = rand_matrix(rng, n, n, -1.0, 1.0);
  return a * a.transpose() + ridge * Matrix::Identity(n, n);
}

/// A A' scaled to a target trace: PSD with off-diagonal correlation.
inline Matrix rand_psd_with_trace(CounterRng& rng, int n, double trace) {
  Matrix s = rand_spd(rng, n, 1e-3);
  s *= trace / s.trace();
  return s;
}

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Monte-Carlo expected MSE; one noise draw per (sample, realization).
inline McEstimate mc_expected_mse(const Vector& alpha, const Matrix& phi, const Vector& y,
                                  const Matrix& chol_factor, int realizations,
                                  CounterRng rng) {
  const Eigen::Index n = phi.rows();
  const Eigen::Index t = phi.cols();
  const Vector base = phi * alpha;
  double sum = 0.0, sum_sq = 0.0;
  Vector z(t);
  for (int r = 0; r < realizations; ++r) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < t; ++j) z(j) = rng.next_gauss();
      const double noisy = base(i) + alpha.dot(chol_factor * z);
      const double err = y(i) - noisy;
      acc += err * err;
    }
    acc /= static_cast<double>(n);
    sum += acc;
    sum_sq += acc * acc;
  }
  McEstimate est;
  est.mean = sum / realizations;
  const double var =
      std::max(0.0, (sum_sq - realizations * est.mean * est.mean) / (realizations - 1.0));
  est.se = std::sqrt(var / realizations);
  return est;
}

/// Monte-Carlo expected MAE; one noise vector per realization (Def 2 reading).
inline McEstimate mc_expected_mae(const Vector& alpha, const Matrix& phi, const Vector& y,
                                  const Matrix& chol_factor, int realizations,
                                  CounterRng rng) {
  const Eigen::Index n = phi.rows();
  const Eigen::Index t = phi.cols();
  const Vector mu = phi * alpha - y;
  double sum = 0.0, sum_sq = 0.0;
  Vector z(t);
  for (int r = 0; r < realizations; ++r) {
    for (Eigen::Index j = 0; j < t; ++j) z(j) = rng.next_gauss();
    const double shift = alpha.dot(chol_factor * z);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += std::abs(mu(i) + shift);
    acc /= static_cast<double>(n);
    sum += acc;
    sum_sq += acc * acc;
  }
  McEstimate est;
  est.mean = sum / realizations;
  const double var =
      std::max(0.0, (sum_sq - realizations * est.mean * est.mean) / (realizations - 1.0));
  est.se = std::sqrt(var / realizations);
  return est;
}

/// Lower-triangular PSD square root via eigendecomposition.
inline Matrix psd_sqrt(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace oracles
