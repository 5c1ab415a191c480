#pragma once

#include <optional>

#include "noisyens/core.hpp"
#include "noisyens/numerics.hpp"

namespace noisyens {

/// Constrained trade-off solution: weights, the multiplier that produced
/// them, and whether the aggregated-noise constraint is tight.
struct TemSolution {
  AggregationWeights weights;
  double lambda = 0.0;
  double constraint_value = 0.0;  // alpha' Sigma alpha
  bool active = false;
};

struct ExpectedMse {
  double total = 0.0;
  double model_term = 0.0;  // (1/N_s) |Phi alpha - y|^2
  double noise_term = 0.0;  // alpha' Sigma alpha
};

/// Uniform 1/T weights.
AggregationWeights bem_weights(int T);

/// min |Phi alpha - y|^2 subject to 1'alpha = 1, solved through the
/// equality-constrained KKT system with the jitter and duplicate-column
/// policies for rank-deficient prediction matrices.
AggregationWeights gem_weights(const PredictionMatrix& Phi, const Vector& y);

/// Closed-form trade-off weights (Phi'Phi + lambda N_s Sigma)^-1 Phi' y.
/// lambda = 1 is the expected-MSE optimum; lambda = 0 the plain
/// least-squares solution (minimum-norm when Phi is rank deficient).
AggregationWeights tem_weights(const PredictionMatrix& Phi, const Vector& y,
                               const NoiseModel& Sigma, double lambda);

/// Solve min model error s.t. alpha' Sigma alpha <= C. Returns the
/// least-squares solution with lambda = 0 when it already satisfies the
/// constraint; otherwise bisects lambda (bracket doubling first) until the
/// constraint is tight to 1e-6 * max(1, C). The constraint value must be
/// non-increasing along the bracket; a violation aborts with a diagnostic.
TemSolution solve_lambda_for_constraint(const PredictionMatrix& Phi, const Vector& y,
                                        const NoiseModel& Sigma, double C);

/// Quadratic-root initializer for the constraint multiplier. Builds the
/// lambda polynomial, derives non-negative candidates from its real roots,
/// and returns the smallest candidate whose realized constraint value is
/// within 25% of C and whose Neumann perturbation stays contractive.
/// Empty when no candidate qualifies; callers fall back to bisection.
std::optional<double> approx_lambda(const PredictionMatrix& Phi, const Vector& y,
                                    const NoiseModel& Sigma, double C);

/// Expected-MSE decomposition: model term plus lambda-weighted aggregated
/// noise power. lambda = 1 is the physical expectation.
ExpectedMse expected_mse(const AggregationWeights& alpha, const PredictionMatrix& Phi,
                         const Vector& y, const NoiseModel& Sigma, double lambda);

}  // namespace noisyens
