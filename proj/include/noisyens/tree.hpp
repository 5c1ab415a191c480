#pragma once

#include <cstdint>
#include <vector>

#include "noisyens/core.hpp"

namespace noisyens {

/// Internal node when feature >= 0 (route left when x[feature] < threshold),
/// leaf otherwise.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

/// CART-style regression tree with variance-reduction splits.
struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int n_features = 0;
  int max_depth = 0;
  int min_leaf = 1;
};

/// Single-leaf tree predicting a constant, accepting any input width.
RegressionTree constant_tree(double value, int n_features);

/// Greedy fit: exhaustive split search over midpoints of consecutive sorted
/// unique feature values, tie-broken by (lowest feature index, lowest
/// threshold); leaf value is the mean of its training targets. Deterministic
/// for fixed input.
RegressionTree fit_tree(const Dataset& dataset, int max_depth, int min_leaf);

double tree_predict(const RegressionTree& tree, const Vector& x);

struct BaggingConfig {
  int T = 32;
  double sample_fraction = 0.6;
  int max_depth = 8;
  int min_leaf = 2;
  std::uint64_t seed = 0;
};

enum class EnsembleKind { Bagging, GradBoost };

struct EnsembleModel {
  std::vector<RegressionTree> trees;
  EnsembleKind kind = EnsembleKind::Bagging;

  int size() const { return static_cast<int>(trees.size()); }
};

/// T trees, tree t fit on floor(sample_fraction * N_s) rows drawn without
/// replacement from stream (seed, t). Fully deterministic for a fixed seed.
EnsembleModel fit_bagging(const Dataset& dataset, const BaggingConfig& config);

/// Entry (i, t) = tree t evaluated on dataset row i.
PredictionMatrix build_prediction_matrix(const EnsembleModel& ensemble,
                                         const Dataset& dataset);

}  // namespace noisyens
