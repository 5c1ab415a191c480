#include "noisyens/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "noisyens/rng.hpp"

namespace noisyens {

namespace {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double sse = std::numeric_limits<double>::infinity();
};

double subset_mean(const Vector& y, const std::vector<int>& idx) {
  double s = 0.0;
  for (int i : idx) s += y(i);
  return s / static_cast<double>(idx.size());
}

double subset_sse(const Vector& y, const std::vector<int>& idx, double mean) {
  double s = 0.0;
  for (int i : idx) {
    const double d = y(i) - mean;
    s += d * d;
  }
  return s;
}

/// Best (feature, threshold) by total child SSE; both children must keep at
/// least min_leaf rows. Returns feature = -1 when no admissible split
/// improves on the parent SSE.
SplitCandidate best_split(const Matrix& x, const Vector& y, const std::vector<int>& idx,
                          int min_leaf, double parent_sse) {
  SplitCandidate best;
  const int n = static_cast<int>(idx.size());
  if (n < 2 * min_leaf) return best;

  std::vector<int> order(idx);
  std::vector<double> prefix_sum(n + 1, 0.0), prefix_sq(n + 1, 0.0);
  for (int f = 0; f < x.cols(); ++f) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (x(a, f) != x(b, f)) return x(a, f) < x(b, f);
      return a < b;
    });
    for (int j = 0; j < n; ++j) {
      const double v = y(order[j]);
      prefix_sum[j + 1] = prefix_sum[j] + v;
      prefix_sq[j + 1] = prefix_sq[j] + v * v;
    }
    const double total_sum = prefix_sum[n];
    const double total_sq = prefix_sq[n];
    for (int j = min_leaf; j <= n - min_leaf; ++j) {
      const double lo = x(order[j - 1], f);
      const double hi = x(order[j], f);
      if (lo == hi) continue;  // not a boundary between distinct values
      const double left_sum = prefix_sum[j];
      const double left_sse = prefix_sq[j] - left_sum * left_sum / j;
      const double right_sum = total_sum - left_sum;
      const double right_sse =
          (total_sq - prefix_sq[j]) - right_sum * right_sum / (n - j);
      const double sse = left_sse + right_sse;
      if (sse < best.sse) {
        best.feature = f;
        best.threshold = 0.5 * (lo + hi);
        best.sse = sse;
      }
    }
  }
  // Reject splits that do not strictly reduce the node SSE (constant targets,
  // pure noise ties); keeps the zero-variance stop exact.
  if (best.feature >= 0 && !(best.sse < parent_sse - 1e-12 * std::max(1.0, parent_sse))) {
    best.feature = -1;
  }
  return best;
}

int grow(RegressionTree& tree, const Matrix& x, const Vector& y, std::vector<int> idx,
         int depth, int max_depth, int min_leaf) {
  const double mean = subset_mean(y, idx);
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, mean});
  if (depth >= max_depth) return node_id;

  const double parent_sse = subset_sse(y, idx, mean);
  const SplitCandidate split = best_split(x, y, idx, min_leaf, parent_sse);
  if (split.feature < 0) return node_id;

  std::vector<int> left_idx, right_idx;
  left_idx.reserve(idx.size());
  right_idx.reserve(idx.size());
  for (int i : idx) {
    (x(i, split.feature) < split.threshold ? left_idx : right_idx).push_back(i);
  }
  idx.clear();
  idx.shrink_to_fit();

  tree.nodes[node_id].feature = split.feature;
  tree.nodes[node_id].threshold = split.threshold;
  const int left = grow(tree, x, y, std::move(left_idx), depth + 1, max_depth, min_leaf);
  tree.nodes[node_id].left = left;
  const int right = grow(tree, x, y, std::move(right_idx), depth + 1, max_depth, min_leaf);
  tree.nodes[node_id].right = right;
  return node_id;
}

RegressionTree fit_on_indices(const Matrix& x, const Vector& y, std::vector<int> idx,
                              int max_depth, int min_leaf) {
  if (idx.empty()) throw DimensionError("fit_tree: empty dataset");
  if (static_cast<int>(idx.size()) < min_leaf) {
    throw DimensionError("fit_tree: fewer rows than min_leaf");
  }
  RegressionTree tree;
  tree.n_features = static_cast<int>(x.cols());
  tree.max_depth = max_depth;
  tree.min_leaf = min_leaf;
  grow(tree, x, y, std::move(idx), 0, max_depth, min_leaf);
  return tree;
}

}  // namespace

RegressionTree constant_tree(double value, int n_features) {
  RegressionTree tree;
  tree.n_features = n_features;
  tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, value});
  return tree;
}

RegressionTree fit_tree(const Dataset& dataset, int max_depth, int min_leaf) {
  if (max_depth < 0 || min_leaf < 1) throw ConfigError("fit_tree: invalid parameters");
  std::vector<int> idx(dataset.n_samples());
  std::iota(idx.begin(), idx.end(), 0);
  return fit_on_indices(dataset.features, dataset.targets, std::move(idx), max_depth,
                        min_leaf);
}

double tree_predict(const RegressionTree& tree, const Vector& x) {
  if (x.size() != tree.n_features) {
    throw DimensionError("tree_predict: input width != training width");
  }
  int node = 0;
  while (!tree.nodes[node].is_leaf()) {
    const TreeNode& n = tree.nodes[node];
    node = x(n.feature) < n.threshold ? n.left : n.right;
  }
  return tree.nodes[node].value;
}

EnsembleModel fit_bagging(const Dataset& dataset, const BaggingConfig& config) {
  if (config.T < 1 || config.sample_fraction <= 0.0 || config.sample_fraction > 1.0 ||
      config.max_depth < 0 || config.min_leaf < 1) {
    throw ConfigError("fit_bagging: invalid config");
  }
  const int n = static_cast<int>(dataset.n_samples());
  const int m = static_cast<int>(std::floor(config.sample_fraction * n));
  if (m < config.min_leaf) {
    throw ConfigError("fit_bagging: subsample smaller than min_leaf");
  }

  EnsembleModel model;
  model.kind = EnsembleKind::Bagging;
  model.trees.reserve(config.T);
  const CounterRng root(config.seed);
  for (int t = 0; t < config.T; ++t) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    CounterRng stream = root.split(static_cast<std::uint64_t>(t));
    stream.shuffle(idx.begin(), idx.end());
    idx.resize(m);
    model.trees.push_back(fit_on_indices(dataset.features, dataset.targets,
                                         std::move(idx), config.max_depth,
                                         config.min_leaf));
  }
  return model;
}

PredictionMatrix build_prediction_matrix(const EnsembleModel& ensemble,
                                         const Dataset& dataset) {
  if (ensemble.trees.empty()) throw DimensionError("build_prediction_matrix: empty ensemble");
  for (const RegressionTree& tree : ensemble.trees) {
    if (tree.n_features != dataset.n_features()) {
      throw DimensionError("build_prediction_matrix: dataset width != ensemble input width");
    }
  }
  PredictionMatrix phi(dataset.n_samples(), ensemble.size());
  for (Eigen::Index i = 0; i < dataset.n_samples(); ++i) {
    const Vector row = dataset.features.row(i);
    for (int t = 0; t < ensemble.size(); ++t) {
      phi(i, t) = tree_predict(ensemble.trees[t], row);
    }
  }
  return phi;
}

}  // namespace noisyens
