#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "noisyens/core.hpp"
#include "noisyens/tree.hpp"
#include "oracles.hpp"

using namespace noisyens;

TEST_CASE("noisy_predict reduces to the noiseless aggregate at zero noise") {
  AggregationWeights w{(Vector(2) << 0.5, 0.5).finished(), WeightMethod::Bem};
  const Vector phi = (Vector(2) << 2.0, 4.0).finished();
  CHECK(noisy_predict(w, phi, Vector::Zero(2)) == doctest::Approx(3.0));
}

TEST_CASE("noisy_predict passes noise through a single channel") {
  AggregationWeights w{Vector::Ones(1), WeightMethod::Bem};
  CHECK(noisy_predict(w, Vector::Zero(1), (Vector(1) << 1.5).finished()) ==
        doctest::Approx(1.5));
}

TEST_CASE("noisy_predict matches a scalar-loop dot product") {
  CounterRng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector alpha = oracles::rand_vector(rng, 4, -2.0, 2.0);
    const Vector phi = oracles::rand_vector(rng, 4, -5.0, 5.0);
    const Vector noise = oracles::rand_vector(rng, 4, -1.0, 1.0);
    AggregationWeights w{alpha, WeightMethod::Gem};
    CHECK(noisy_predict(w, phi, noise) ==
          doctest::Approx(oracles::dot_loop(alpha, phi + noise)).epsilon(1e-12));
  }
}

TEST_CASE("noisy_predict rejects mismatched lengths") {
  AggregationWeights w{Vector::Ones(2), WeightMethod::Bem};
  CHECK_THROWS_AS(noisy_predict(w, Vector::Zero(3), Vector::Zero(3)), DimensionError);
  CHECK_THROWS_AS(noisy_predict(w, Vector::Zero(2), Vector::Zero(1)), DimensionError);
}

TEST_CASE("noiseless aggregate equals alpha'phi for random inputs") {
  CounterRng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const int t = 1 + static_cast<int>(rng.next_u64() % 6);
    const Vector alpha = oracles::rand_vector(rng, t, -3.0, 3.0);
    const Vector phi = oracles::rand_vector(rng, t, -3.0, 3.0);
    AggregationWeights w{alpha, WeightMethod::Tem};
    CHECK(noisy_predict(w, phi, Vector::Zero(t)) ==
          doctest::Approx(alpha.dot(phi)).epsilon(1e-13));
  }
}

TEST_CASE("dataset validates row/target agreement") {
  CHECK_THROWS_AS(Dataset(Matrix::Zero(3, 2), Vector::Zero(2), "bad"), DimensionError);
  CHECK_THROWS_AS(Dataset(Matrix::Zero(0, 2), Vector::Zero(0), "empty"), DimensionError);
  const Dataset ok(Matrix::Zero(3, 2), Vector::Zero(3), "ok");
  CHECK(ok.n_samples() == 3);
  CHECK(ok.n_features() == 2);
}

TEST_CASE("noise model validates symmetry and positive semidefiniteness") {
  Matrix asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(NoiseModel{asym}, DimensionError);

  Matrix neg_diag(2, 2);
  neg_diag << -1.0, 0.0, 0.0, 1.0;
  CHECK_THROWS(NoiseModel{neg_diag});

  Matrix indefinite(2, 2);
  indefinite << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(NoiseModel{indefinite}, NumericalError);

  Matrix ok(2, 2);
  ok << 2.0, 0.5, 0.5, 1.0;
  const NoiseModel m(ok);
  CHECK(m.size() == 2);
  CHECK(!m.is_zero());
  CHECK(NoiseModel::zero(3).is_zero());
}

TEST_CASE("prediction matrix of a constant-1 ensemble is all ones") {
  EnsembleModel ens;
  ens.trees.push_back(constant_tree(1.0, 2));
  const Dataset ds(Matrix::Random(3, 2), Vector::Zero(3), "c");
  const PredictionMatrix phi = build_prediction_matrix(ens, ds);
  CHECK(phi.rows() == 3);
  CHECK(phi.cols() == 1);
  CHECK(phi.isApproxToConstant(1.0));
}
