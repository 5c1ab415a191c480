#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "noisyens/tree.hpp"
#include "oracles.hpp"

using namespace noisyens;

namespace {

/// Ten rows split cleanly at x = 0: y = 0 below, 1 at or above.
Dataset step_dataset() {
  Matrix x(10, 1);
  Vector y(10);
  for (int i = 0; i < 5; ++i) {
    x(i, 0) = -5.0 + i;  // -5 .. -1
    y(i) = 0.0;
  }
  for (int i = 0; i < 5; ++i) {
    x(5 + i, 0) = 1.0 + i;  // 1 .. 5
    y(5 + i) = 1.0;
  }
  return Dataset(std::move(x), std::move(y), "step");
}

double training_mse(const RegressionTree& tree, const Dataset& ds) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ds.n_samples(); ++i) {
    const double e = tree_predict(tree, ds.features.row(i)) - ds.targets(i);
    acc += e * e;
  }
  return acc / static_cast<double>(ds.n_samples());
}

/// Route the training rows and count how many land in each leaf.
void leaf_counts(const RegressionTree& tree, const Dataset& ds, std::vector<int>& counts) {
  counts.assign(tree.nodes.size(), 0);
  for (Eigen::Index i = 0; i < ds.n_samples(); ++i) {
    int node = 0;
    while (!tree.nodes[node].is_leaf()) {
      const TreeNode& n = tree.nodes[node];
      node = ds.features(i, n.feature) < n.threshold ? n.left : n.right;
    }
    ++counts[node];
  }
}

}  // namespace

TEST_CASE("fit_tree: depth zero is the target mean") {
  const Dataset ds(Matrix::Zero(3, 1), (Vector(3) << 1.0, 2.0, 3.0).finished(), "m");
  const RegressionTree tree = fit_tree(ds, 0, 1);
  CHECK(tree.nodes.size() == 1);
  CHECK(tree_predict(tree, Vector::Zero(1)) == doctest::Approx(2.0));
}

TEST_CASE("fit_tree: one split solves the step function") {
  const Dataset ds = step_dataset();
  const RegressionTree tree = fit_tree(ds, 1, 1);
  CHECK(training_mse(tree, ds) == doctest::Approx(0.0));
  REQUIRE(!tree.nodes[0].is_leaf());
  // Exhaustive scan over candidate boundaries agrees: the only zero-SSE
  // boundary is between -1 and 1, so the chosen threshold must be 0.
  CHECK(tree.nodes[0].threshold == doctest::Approx(0.0));
  CHECK(tree_predict(tree, (Vector(1) << -5.0).finished()) == doctest::Approx(0.0));
  CHECK(tree_predict(tree, (Vector(1) << 5.0).finished()) == doctest::Approx(1.0));
}

TEST_CASE("fit_tree: constant targets never split") {
  const Dataset ds(Matrix::Random(20, 3), Vector::Constant(20, 4.2), "const");
  const RegressionTree tree = fit_tree(ds, 6, 1);
  CHECK(tree.nodes.size() == 1);
  CHECK(tree_predict(tree, Vector::Zero(3)) == doctest::Approx(4.2));
}

TEST_CASE("tree_predict: manual depth-1 routing and width validation") {
  RegressionTree tree;
  tree.n_features = 1;
  tree.nodes = {TreeNode{0, 0.0, 1, 2, 0.0}, TreeNode{-1, 0.0, -1, -1, -1.0},
                TreeNode{-1, 0.0, -1, -1, 1.0}};
  CHECK(tree_predict(tree, (Vector(1) << -5.0).finished()) == doctest::Approx(-1.0));
  CHECK(tree_predict(tree, (Vector(1) << 0.5).finished()) == doctest::Approx(1.0));
  CHECK_THROWS_AS(tree_predict(tree, Vector::Zero(2)), DimensionError);
}

TEST_CASE("fit_tree: fitted step tree reproduces its training targets") {
  const Dataset ds = step_dataset();
  const RegressionTree tree = fit_tree(ds, 3, 1);
  for (Eigen::Index i = 0; i < ds.n_samples(); ++i) {
    CHECK(tree_predict(tree, ds.features.row(i)) == doctest::Approx(ds.targets(i)));
  }
}

TEST_CASE("fit_tree: training MSE is non-increasing in depth") {
  CounterRng rng(31);
  const Dataset ds(oracles::rand_matrix(rng, 60, 2, -1.0, 1.0),
                   oracles::rand_vector(rng, 60, -1.0, 1.0), "rand");
  double prev = std::numeric_limits<double>::infinity();
  for (int depth = 0; depth <= 5; ++depth) {
    const double mse = training_mse(fit_tree(ds, depth, 2), ds);
    CHECK(mse <= prev + 1e-12);
    prev = mse;
  }
}

TEST_CASE("fit_tree: every leaf keeps at least min_leaf training rows") {
  CounterRng rng(32);
  const Dataset ds(oracles::rand_matrix(rng, 37, 2, -1.0, 1.0),
                   oracles::rand_vector(rng, 37, -1.0, 1.0), "rand");
  for (int min_leaf : {1, 3, 5}) {
    const RegressionTree tree = fit_tree(ds, 8, min_leaf);
    std::vector<int> counts;
    leaf_counts(tree, ds, counts);
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
      if (tree.nodes[n].is_leaf()) CHECK(counts[n] >= min_leaf);
    }
  }
}

TEST_CASE("fit_bagging: full-fraction subsamples give identical trees") {
  const Dataset ds = step_dataset();
  BaggingConfig cfg;
  cfg.T = 3;
  cfg.sample_fraction = 1.0;
  cfg.max_depth = 2;
  cfg.min_leaf = 1;
  cfg.seed = 9;
  const EnsembleModel ens = fit_bagging(ds, cfg);
  const PredictionMatrix phi = build_prediction_matrix(ens, ds);
  CHECK((phi.col(0) - phi.col(1)).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK((phi.col(0) - phi.col(2)).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("fit_bagging: a fixed seed reproduces the prediction matrix bit for bit") {
  CounterRng rng(33);
  const Dataset ds(oracles::rand_matrix(rng, 50, 2, -1.0, 1.0),
                   oracles::rand_vector(rng, 50, -1.0, 1.0), "rand");
  BaggingConfig cfg;
  cfg.T = 6;
  cfg.sample_fraction = 0.6;
  cfg.max_depth = 4;
  cfg.min_leaf = 2;
  cfg.seed = 1234;
  const PredictionMatrix a = build_prediction_matrix(fit_bagging(ds, cfg), ds);
  const PredictionMatrix b = build_prediction_matrix(fit_bagging(ds, cfg), ds);
  CHECK(a == b);
}

TEST_CASE("fit_bagging: invalid configs are rejected") {
  const Dataset ds = step_dataset();
  BaggingConfig cfg;
  cfg.T = 0;
  CHECK_THROWS_AS(fit_bagging(ds, cfg), ConfigError);
  cfg.T = 2;
  cfg.sample_fraction = 0.0;
  CHECK_THROWS_AS(fit_bagging(ds, cfg), ConfigError);
  cfg.sample_fraction = 0.05;  // subsample of 0 rows
  CHECK_THROWS_AS(fit_bagging(ds, cfg), ConfigError);
}

TEST_CASE("fit_bagging: ensemble mean beats the average single tree on sine") {
  // Variance-reduction check: bagged average vs the mean RMSE of its members.
  CounterRng rng(34);
  Matrix x_train(300, 1), x_test(200, 1);
  Vector y_train(300), y_test(200);
  for (int i = 0; i < 300; ++i) {
    const double xi = 6.0 * rng.next_double();
    x_train(i, 0) = xi;
    y_train(i) = std::sin(xi) + std::sin(6.0 * xi) + 0.1 * rng.next_gauss();
  }
  for (int i = 0; i < 200; ++i) {
    const double xi = 6.0 * rng.next_double();
    x_test(i, 0) = xi;
    y_test(i) = std::sin(xi) + std::sin(6.0 * xi) + 0.1 * rng.next_gauss();
  }
  const Dataset train(std::move(x_train), std::move(y_train), "sine");

  BaggingConfig cfg;
  cfg.T = 32;
  cfg.sample_fraction = 0.6;
  cfg.max_depth = 4;
  cfg.min_leaf = 2;
  cfg.seed = 7;
  const EnsembleModel ens = fit_bagging(train, cfg);

  const Dataset test(std::move(x_test), std::move(y_test), "sine");
  const PredictionMatrix phi = build_prediction_matrix(ens, test);
  const Vector mean_pred = phi.rowwise().mean();
  const double ens_rmse = std::sqrt((mean_pred - test.targets).squaredNorm() / 200.0);

  double avg_single = 0.0;
  for (int t = 0; t < cfg.T; ++t) {
    avg_single += std::sqrt((phi.col(t) - test.targets).squaredNorm() / 200.0);
  }
  avg_single /= cfg.T;
  CHECK(ens_rmse < avg_single);
}

TEST_CASE("build_prediction_matrix entries equal per-row tree predictions") {
  CounterRng rng(35);
  const Dataset train(oracles::rand_matrix(rng, 40, 2, -1.0, 1.0),
                      oracles::rand_vector(rng, 40, -1.0, 1.0), "rand");
  BaggingConfig cfg;
  cfg.T = 5;
  cfg.max_depth = 6;
  cfg.min_leaf = 1;
  cfg.sample_fraction = 1.0;  // trees memorize the training set
  cfg.seed = 13;
  const EnsembleModel ens = fit_bagging(train, cfg);
  const PredictionMatrix phi = build_prediction_matrix(ens, train);
  for (Eigen::Index i = 0; i < train.n_samples(); ++i) {
    for (int t = 0; t < ens.size(); ++t) {
      CHECK(phi(i, t) == tree_predict(ens.trees[t], train.features.row(i)));
    }
  }
}

TEST_CASE("build_prediction_matrix validates widths and shapes") {
  const Dataset ds = step_dataset();
  BaggingConfig cfg;
  cfg.T = 2;
  cfg.max_depth = 1;
  cfg.min_leaf = 1;
  cfg.sample_fraction = 1.0;
  const EnsembleModel ens = fit_bagging(ds, cfg);
  const PredictionMatrix phi = build_prediction_matrix(ens, ds);
  CHECK(phi.rows() == 10);
  CHECK(phi.cols() == 2);

  const Dataset wide(Matrix::Zero(4, 3), Vector::Zero(4), "wide");
  CHECK_THROWS_AS(build_prediction_matrix(ens, wide), DimensionError);
}
