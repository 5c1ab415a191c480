#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "noisyens/aggregate_mae.hpp"
#include "noisyens/numerics.hpp"
#include "oracles.hpp"

using namespace noisyens;

namespace {

constexpr double kSqrt2OverPi = 0.79788456080286535588;

struct Instance {
  PredictionMatrix phi;
  Vector y;
  NoiseModel sigma;
};

Instance random_instance(CounterRng& rng, int n, int t, double noise_trace) {
  Instance inst;
  inst.phi = oracles::rand_matrix(rng, n, t, -1.0, 1.0);
  inst.y = oracles::rand_vector(rng, n, -1.0, 1.0);
  inst.sigma = NoiseModel{oracles::rand_psd_with_trace(rng, t, noise_trace)};
  return inst;
}

}  // namespace

TEST_CASE("expected_mae: zero-mean folded normal and degenerate limits") {
  const Matrix phi = Matrix::Ones(1, 1);
  const NoiseModel unit{Matrix::Identity(1, 1)};

  // mu = 0, sigma = 1: alpha = 1 on a zero prediction with a zero target.
  CHECK(expected_mae(Vector::Ones(1), Matrix::Zero(1, 1), Vector::Zero(1), unit) ==
        doctest::Approx(kSqrt2OverPi).epsilon(1e-12));

  // Sigma = 0 falls back to the mean absolute residual.
  const Vector alpha = (Vector(1) << 2.0).finished();
  CHECK(expected_mae(alpha, phi, (Vector(1) << 5.0).finished(), NoiseModel::zero(1)) ==
        doctest::Approx(3.0));

  // mu = 1, sigma = 1: folded-normal mean evaluated numerically.
  const double value = expected_mae(Vector::Ones(1), phi, Vector::Zero(1), unit);
  CHECK(value == doctest::Approx(1.16664).epsilon(1e-4));
  CHECK(value == doctest::Approx(kSqrt2OverPi * std::exp(-0.5) +
                                 (2.0 * 0.841344746 - 1.0)).epsilon(1e-8));
}

TEST_CASE("expected_mae: Monte-Carlo agreement on random instances") {
  CounterRng rng(71);
  for (int rep = 0; rep < 5; ++rep) {
    const Instance inst = random_instance(rng, 12, 4, 0.7);
    const Vector alpha = oracles::rand_vector(rng, 4, -1.0, 1.0);
    const double analytic = expected_mae(alpha, inst.phi, inst.y, inst.sigma);
    const auto mc = oracles::mc_expected_mae(alpha, inst.phi, inst.y,
                                             oracles::psd_sqrt(inst.sigma.cov), 100000, rng);
    CHECK(std::abs(mc.mean - analytic) < 3.0 * mc.se);
  }
}

TEST_CASE("expected_mae_gradient: zero-residual case collapses to the noise direction") {
  CounterRng rng(72);
  const int t = 3;
  const Matrix phi = oracles::rand_matrix(rng, 6, t, -1.0, 1.0);
  const Vector alpha = oracles::rand_vector(rng, t, 0.2, 1.0);
  const Vector y = phi * alpha;  // every residual vanishes
  const NoiseModel sigma{oracles::rand_psd_with_trace(rng, t, 0.5)};
  const double scale = std::sqrt(alpha.dot(sigma.cov * alpha));
  const Vector expected = kSqrt2OverPi * (sigma.cov * alpha) / scale;
  const Vector grad = expected_mae_gradient(alpha, phi, y, sigma);
  CHECK((grad - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("expected_mae_gradient: central finite differences") {
  CounterRng rng(73);
  for (int rep = 0; rep < 30; ++rep) {
    const Instance inst = random_instance(rng, 10, 4, 0.5);
    const Vector alpha = oracles::rand_vector(rng, 4, -1.0, 1.0);
    if (std::sqrt(std::max(0.0, alpha.dot(inst.sigma.cov * alpha))) < 1e-3) continue;
    const Vector grad = expected_mae_gradient(alpha, inst.phi, inst.y, inst.sigma);
    const Vector fd = oracles::central_diff(
        [&](const Vector& a) { return expected_mae(a, inst.phi, inst.y, inst.sigma); },
        alpha, 1e-6);
    for (int j = 0; j < 4; ++j) {
      CHECK(std::abs(grad(j) - fd(j)) <= 1e-5 * std::max(1e-6, std::abs(grad(j))));
    }
  }
}

TEST_CASE("expected_mae_gradient: vanishing noise matches the sign gradient") {
  CounterRng rng(74);
  const Instance inst = random_instance(rng, 8, 3, 0.0);
  const Vector alpha = oracles::rand_vector(rng, 3, -1.0, 1.0);
  const Vector robust = expected_mae_gradient(alpha, inst.phi, inst.y, NoiseModel::zero(3));
  const Vector plain = noiseless_mae_gradient(alpha, inst.phi, inst.y);
  CHECK((robust - plain).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("noiseless_mae_gradient: perfect fit, single sample, finite differences") {
  CounterRng rng(75);
  const Matrix phi = oracles::rand_matrix(rng, 6, 2, -1.0, 1.0);
  const Vector alpha = oracles::rand_vector(rng, 2, -1.0, 1.0);
  CHECK(noiseless_mae_gradient(alpha, phi, phi * alpha).cwiseAbs().maxCoeff() ==
        doctest::Approx(0.0));

  Matrix one_row(1, 2);
  one_row << 1.0, 2.0;
  const Vector g =
      noiseless_mae_gradient(Vector::Ones(2), one_row, (Vector(1) << 1.0).finished());
  CHECK(g(0) == doctest::Approx(1.0));
  CHECK(g(1) == doctest::Approx(2.0));

  for (int rep = 0; rep < 10; ++rep) {
    const Instance inst = random_instance(rng, 9, 3, 0.0);
    const Vector a = oracles::rand_vector(rng, 3, -1.0, 1.0);
    const Vector mu = inst.phi * a - inst.y;
    if (mu.cwiseAbs().minCoeff() < 1e-3) continue;  // keep clear of kinks
    const Vector fd = oracles::central_diff(
        [&](const Vector& v) { return noiseless_mae(v, inst.phi, inst.y); }, a, 1e-7);
    CHECK((noiseless_mae_gradient(a, inst.phi, inst.y) - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("optimize_weights_gd: scalar noiseless problem converges to the median") {
  // alpha vs targets (0, 0, 10) under MAE: the median 0 minimizes.
  const Matrix phi = Matrix::Ones(3, 1);
  const Vector y = (Vector(3) << 0.0, 0.0, 10.0).finished();
  MaeGdConfig cfg;
  cfg.robust = false;
  cfg.i_max = 20000;
  cfg.i_min = 200;
  const AggregationWeights w = optimize_weights_gd(phi, y, NoiseModel::zero(1), cfg);
  const double grid = oracles::grid_min_1d(
      [&](double a) { return noiseless_mae(Vector::Constant(1, a), phi, y); }, -2.0, 12.0,
      201, 6);
  CHECK(std::abs(grid) < 1e-3);  // oracle confirms the median
  CHECK(std::abs(w.alpha(0) - 0.0) < 1e-3);
}

TEST_CASE("optimize_weights_gd: never worse than the uniform start") {
  CounterRng rng(76);
  for (int rep = 0; rep < 5; ++rep) {
    const Instance inst = random_instance(rng, 14, 4, 0.4);
    for (bool robust : {false, true}) {
      MaeGdConfig cfg;
      cfg.robust = robust;
      const AggregationWeights w =
          optimize_weights_gd(inst.phi, inst.y, inst.sigma, cfg);
      auto objective = [&](const Vector& a) {
        return robust ? expected_mae(a, inst.phi, inst.y, inst.sigma)
                      : noiseless_mae(a, inst.phi, inst.y);
      };
      CHECK(objective(w.alpha) <= objective(Vector::Constant(4, 0.25)) + 1e-12);
      CHECK(w.method ==
            (robust ? WeightMethod::MaeGd : WeightMethod::MaeGdNonrobust));
    }
  }
}

TEST_CASE("optimize_weights_gd: close to a coordinate grid oracle in 3-d") {
  CounterRng rng(77);
  Instance inst = random_instance(rng, 20, 3, 0.0);
  inst.sigma = NoiseModel{0.1 * Matrix::Identity(3, 3)};
  MaeGdConfig cfg;
  cfg.robust = true;
  const AggregationWeights w = optimize_weights_gd(inst.phi, inst.y, inst.sigma, cfg);
  auto objective = [&](const Vector& a) {
    return expected_mae(a, inst.phi, inst.y, inst.sigma);
  };
  const Vector grid = oracles::grid_min_nd(objective, 3, -2.0, 2.0, 13, 8);
  CHECK(objective(w.alpha) <= 1.01 * objective(grid) + 1e-12);
}

TEST_CASE("optimize_weights_gd: config validation") {
  const Matrix phi = Matrix::Ones(2, 1);
  MaeGdConfig bad;
  bad.eta = 0.0;
  CHECK_THROWS_AS(
      optimize_weights_gd(phi, Vector::Zero(2), NoiseModel::zero(1), bad), ConfigError);
  bad = MaeGdConfig{};
  bad.gamma = 1.0;
  CHECK_THROWS_AS(
      optimize_weights_gd(phi, Vector::Zero(2), NoiseModel::zero(1), bad), ConfigError);
  bad = MaeGdConfig{};
  bad.i_min = 10;
  bad.i_max = 5;
  CHECK_THROWS_AS(
      optimize_weights_gd(phi, Vector::Zero(2), NoiseModel::zero(1), bad), ConfigError);
}

TEST_CASE("mae_upper_bound: zero noise returns the plain noiseless loss") {
  CounterRng rng(78);
  const Instance inst = random_instance(rng, 10, 3, 0.0);
  const Vector alpha = oracles::rand_vector(rng, 3, -1.0, 1.0);
  const NoiseModel zero = NoiseModel::zero(3);
  CHECK(mae_upper_bound(inst.phi, inst.y, zero, MaeUpperMode::Generic, &alpha) ==
        doctest::Approx(noiseless_mae(alpha, inst.phi, inst.y)));
  CHECK(mae_upper_bound(inst.phi, inst.y, zero, MaeUpperMode::Bem) ==
        doctest::Approx(noiseless_mae(Vector::Constant(3, 1.0 / 3.0), inst.phi, inst.y)));
}

TEST_CASE("mae_upper_bound: single regressor and symmetric mineig noise terms") {
  const Matrix phi = Matrix::Ones(4, 1);
  const Vector y = (Vector(4) << 0.0, 1.0, 2.0, 3.0).finished();
  const NoiseModel unit{Matrix::Identity(1, 1)};
  CHECK(mae_upper_bound(phi, y, unit, MaeUpperMode::Bem) ==
        doctest::Approx(noiseless_mae(Vector::Ones(1), phi, y) + std::sqrt(2.0 / M_PI)));

  // Sigma = sigma^2 I: minimal constrained noise power is sigma^2 / T.
  CounterRng rng(79);
  const int t = 5;
  const double s2 = 0.49;
  const Matrix phi2 = oracles::rand_matrix(rng, 12, t, -1.0, 1.0);
  const Vector y2 = oracles::rand_vector(rng, 12, -1.0, 1.0);
  const NoiseModel iso{s2 * Matrix::Identity(t, t)};
  const double bound = mae_upper_bound(phi2, y2, iso, MaeUpperMode::MinEig);
  const double expected_noise = std::sqrt(2.0 * s2 / (M_PI * t));
  CHECK(bound - noiseless_mae(Vector::Constant(t, 1.0 / t), phi2, y2) ==
        doctest::Approx(expected_noise).epsilon(1e-9));
  CHECK_THROWS_AS(mae_upper_bound(phi2, y2, iso, MaeUpperMode::Generic), ConfigError);
}

TEST_CASE("mae_lower_bound: zero-noise and perfect-regressor limits") {
  CounterRng rng(80);
  const Instance inst = random_instance(rng, 10, 3, 0.0);
  MaeGdConfig cfg;
  cfg.robust = false;
  const AggregationWeights dagger =
      optimize_weights_gd(inst.phi, inst.y, NoiseModel::zero(3), cfg);

  // Sigma -> 0: the noise-dominated sum is negative, so the simple bound wins.
  const MaeBoundReport zero_rep =
      mae_bounds(inst.phi, inst.y, NoiseModel::zero(3), dagger.alpha);
  CHECK(zero_rep.lower ==
        doctest::Approx(noiseless_mae(dagger.alpha, inst.phi, inst.y)).epsilon(1e-12));
  CHECK(zero_rep.lower_source == MaeBoundReport::LowerSource::Simple);

  // Perfect regressors: every column equals y, so mu_bar = 0 and the bound is
  // the pure noise floor sqrt(2/pi) sigma_bar.
  Matrix perfect(6, 2);
  const Vector targets = oracles::rand_vector(rng, 6, -1.0, 1.0);
  perfect.col(0) = targets;
  perfect.col(1) = targets;
  const NoiseModel iso{0.09 * Matrix::Identity(2, 2)};
  const double sigma_bar = std::sqrt(min_constrained_quadratic(iso.cov).value);
  const double lb = mae_lower_bound(perfect, targets, iso, Vector::Constant(2, 0.5));
  CHECK(lb == doctest::Approx(kSqrt2OverPi * sigma_bar).epsilon(1e-9));
}

TEST_CASE("bounds sandwich the optimized expected MAE") {
  CounterRng rng(81);
  for (int rep = 0; rep < 8; ++rep) {
    const Instance inst = random_instance(rng, 16, 4, 0.2 + 0.6 * rng.next_double());
    MaeGdConfig noiseless_cfg;
    noiseless_cfg.robust = false;
    const AggregationWeights dagger =
        optimize_weights_gd(inst.phi, inst.y, NoiseModel::zero(4), noiseless_cfg);
    MaeGdConfig robust_cfg;
    robust_cfg.robust = true;
    const AggregationWeights star =
        optimize_weights_gd(inst.phi, inst.y, inst.sigma, robust_cfg);

    const MaeBoundReport rep_out = mae_bounds(inst.phi, inst.y, inst.sigma, dagger.alpha);
    const double optimized = expected_mae(star.alpha, inst.phi, inst.y, inst.sigma);
    CHECK(rep_out.lower <= optimized + 1e-9);
    CHECK(optimized <= rep_out.upper + 1e-9);
  }
}

TEST_CASE("bounds collapse onto the noiseless optimum as the noise vanishes") {
  CounterRng rng(82);
  const Instance inst = random_instance(rng, 14, 3, 0.0);
  MaeGdConfig cfg;
  cfg.robust = false;
  const AggregationWeights dagger =
      optimize_weights_gd(inst.phi, inst.y, NoiseModel::zero(3), cfg);
  const double j1 = noiseless_mae(dagger.alpha, inst.phi, inst.y);

  const NoiseModel tiny{1e-18 * Matrix::Identity(3, 3)};
  const MaeBoundReport rep_out = mae_bounds(inst.phi, inst.y, tiny, dagger.alpha);
  CHECK(std::abs(rep_out.upper - j1) < 1e-6);
  CHECK(std::abs(rep_out.lower - j1) < 1e-6);
  CHECK(rep_out.upper_source == MaeBoundReport::UpperSource::Generic);
}
