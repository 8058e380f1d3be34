#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tbscreen/models/common.hpp"

namespace tbscreen {

enum class FeatureSubset { sqrt_of_d, log2_of_d };
enum class SplitCriterion { gini, entropy };

inline FeatureSubset feature_subset_from_string(const std::string& s) {
  if (s == "sqrt") return FeatureSubset::sqrt_of_d;
  if (s == "log2") return FeatureSubset::log2_of_d;
  throw config_error("rf: max_features must be sqrt or log2");
}
inline const char* to_string(FeatureSubset f) {
  return f == FeatureSubset::sqrt_of_d ? "sqrt" : "log2";
}

inline SplitCriterion split_criterion_from_string(const std::string& s) {
  if (s == "gini") return SplitCriterion::gini;
  if (s == "entropy") return SplitCriterion::entropy;
  throw config_error("rf: criterion must be gini or entropy");
}
inline const char* to_string(SplitCriterion c) {
  return c == SplitCriterion::gini ? "gini" : "entropy";
}

struct RfParams {
  int n_estimators = 100;
  FeatureSubset max_features = FeatureSubset::sqrt_of_d;
  int max_depth = 6;
  SplitCriterion criterion = SplitCriterion::gini;

  void validate() const {
    if (n_estimators < 1) throw config_error("rf: n_estimators must be >= 1");
    if (max_depth < 1) throw config_error("rf: max_depth must be >= 1");
  }
};

namespace detail {

inline double node_impurity(double n_pos, double n_total, SplitCriterion criterion) {
  if (n_total <= 0.0) return 0.0;
  const double p = n_pos / n_total;
  if (criterion == SplitCriterion::gini) return 1.0 - p * p - (1.0 - p) * (1.0 - p);
  double h = 0.0;
  if (p > 0.0) h -= p * std::log2(p);
  if (p < 1.0) h -= (1.0 - p) * std::log2(1.0 - p);
  return h;
}

}  // namespace detail

// Axis-aligned binary tree; x[feature] <= threshold goes left. Leaves store
// the positive-class fraction of their training rows.
struct DecisionTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double prob = 0.0;
  };
  std::vector<Node> nodes;

  double predict(const double* x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const Node& n = nodes[static_cast<std::size_t>(i)];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].prob;
  }
};

namespace detail {

struct TreeBuilder {
  const DataMatrix& X;
  const std::vector<int>& y;
  const RfParams& params;
  RandomStream& rng;
  DecisionTree tree;
  std::vector<std::size_t> feature_pool;

  TreeBuilder(const DataMatrix& x_in, const std::vector<int>& y_in, const RfParams& p,
              RandomStream& r)
      : X(x_in), y(y_in), params(p), rng(r), feature_pool(x_in.n_cols) {
    std::iota(feature_pool.begin(), feature_pool.end(), std::size_t{0});
  }

  std::size_t subset_size() const {
    const double d = static_cast<double>(X.n_cols);
    const double k = params.max_features == FeatureSubset::sqrt_of_d
                         ? std::floor(std::sqrt(d))
                         : std::floor(std::log2(d));
    return static_cast<std::size_t>(std::max(1.0, k));
  }

  // Partial Fisher-Yates draw of k distinct features, returned ascending so
  // the split tie-break (lowest feature, lowest threshold) is well defined.
  std::vector<std::size_t> sample_features() {
    const std::size_t k = std::min(subset_size(), feature_pool.size());
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.index(feature_pool.size() - i);
      std::swap(feature_pool[i], feature_pool[j]);
    }
    std::vector<std::size_t> chosen(feature_pool.begin(),
                                    feature_pool.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  int build(std::vector<std::size_t>& rows, int depth) {
    const double n = static_cast<double>(rows.size());
    double n_pos = 0.0;
    for (std::size_t r : rows) n_pos += y[r];

    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.back().prob = n_pos / n;

    if (depth >= params.max_depth || rows.size() < 2 || n_pos == 0.0 || n_pos == n) {
      return node_id;
    }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_impurity = node_impurity(n_pos, n, params.criterion);

    std::vector<std::pair<double, int>> sorted;  // (value, label)
    for (std::size_t f : sample_features()) {
      sorted.clear();
      sorted.reserve(rows.size());
      for (std::size_t r : rows) sorted.emplace_back(X.at(r, f), y[r]);
      std::sort(sorted.begin(), sorted.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });

      double left_pos = 0.0;
      for (std::size_t i = 1; i < sorted.size(); ++i) {
        left_pos += sorted[i - 1].second;
        if (sorted[i].first <= sorted[i - 1].first) continue;  // not a boundary
        const double nl = static_cast<double>(i);
        const double nr = n - nl;
        const double imp = (nl / n) * node_impurity(left_pos, nl, params.criterion) +
                           (nr / n) * node_impurity(n_pos - left_pos, nr, params.criterion);
        if (imp < best_impurity) {
          best_impurity = imp;
          best_feature = static_cast<int>(f);
          best_threshold = (sorted[i - 1].first + sorted[i].first) / 2.0;
        }
      }
    }

    if (best_feature < 0) return node_id;  // no improving split among sampled features

    std::vector<std::size_t> left_rows;
    std::vector<std::size_t> right_rows;
    for (std::size_t r : rows) {
      (X.at(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? left_rows : right_rows)
          .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(node_id)].threshold = best_threshold;
    const int left_id = build(left_rows, depth + 1);
    tree.nodes[static_cast<std::size_t>(node_id)].left = left_id;
    const int right_id = build(right_rows, depth + 1);
    tree.nodes[static_cast<std::size_t>(node_id)].right = right_id;
    return node_id;
  }
};

}  // namespace detail

class ForestModel final : public TrainedModel {
 public:
  ForestModel(ModelSpec spec, std::vector<DecisionTree> trees, std::size_t n_features)
      : TrainedModel(std::move(spec)), trees_(std::move(trees)), n_features_(n_features) {}

  ModelFamily family() const override { return ModelFamily::rf; }
  std::size_t n_features() const override { return n_features_; }

  double predict_one(const double* x) const override {
    double s = 0.0;
    for (const DecisionTree& t : trees_) s += t.predict(x);
    return s / static_cast<double>(trees_.size());
  }

  nlohmann::json params_to_json() const override {
    nlohmann::json trees = nlohmann::json::array();
    for (const DecisionTree& t : trees_) {
      std::vector<int> features;
      std::vector<int> lefts;
      std::vector<int> rights;
      std::vector<double> thresholds;
      std::vector<double> probs;
      for (const auto& n : t.nodes) {
        features.push_back(n.feature);
        lefts.push_back(n.left);
        rights.push_back(n.right);
        thresholds.push_back(n.threshold);
        probs.push_back(n.prob);
      }
      trees.push_back({{"features", features},
                       {"lefts", lefts},
                       {"rights", rights},
                       {"thresholds", base64_doubles(thresholds)},
                       {"probs", base64_doubles(probs)}});
    }
    return {{"n_features", n_features_}, {"trees", std::move(trees)}};
  }
  static ForestModel from_json(ModelSpec spec, const nlohmann::json& params) {
    std::vector<DecisionTree> trees;
    for (const auto& jt : params.at("trees")) {
      const auto features = jt.at("features").get<std::vector<int>>();
      const auto lefts = jt.at("lefts").get<std::vector<int>>();
      const auto rights = jt.at("rights").get<std::vector<int>>();
      const auto thresholds = doubles_from_base64(jt.at("thresholds").get<std::string>());
      const auto probs = doubles_from_base64(jt.at("probs").get<std::string>());
      if (features.size() != thresholds.size() || features.size() != probs.size() ||
          features.size() != lefts.size() || features.size() != rights.size()) {
        throw schema_error("rf params: inconsistent tree blocks");
      }
      DecisionTree t;
      t.nodes.resize(features.size());
      for (std::size_t i = 0; i < features.size(); ++i) {
        t.nodes[i] = {features[i], thresholds[i], lefts[i], rights[i], probs[i]};
      }
      trees.push_back(std::move(t));
    }
    return ForestModel(std::move(spec), std::move(trees),
                       params.at("n_features").get<std::size_t>());
  }

  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  std::vector<DecisionTree> trees_;
  std::size_t n_features_;
};

// Bootstrap-aggregated trees; per-node feature subsets keep trees decorrelated.
inline ForestModel train_rf(const DataMatrix& X, const std::vector<int>& y, const RfParams& params,
                            std::uint64_t seed) {
  params.validate();
  if (X.n_rows != y.size() || X.n_rows == 0) throw data_error("rf: bad training shape");
  require_finite(X, "rf");
  require_binary_labels(y, "rf");

  std::vector<DecisionTree> trees;
  trees.reserve(static_cast<std::size_t>(params.n_estimators));
  for (int t = 0; t < params.n_estimators; ++t) {
    RandomStream rng(derive_seed(seed, {"rf", "tree", std::to_string(t)}));
    std::vector<std::size_t> rows(X.n_rows);
    for (std::size_t& r : rows) r = rng.index(X.n_rows);
    detail::TreeBuilder builder(X, y, params, rng);
    builder.build(rows, 0);
    trees.push_back(std::move(builder.tree));
  }

  ModelSpec spec;
  spec.family = ModelFamily::rf;
  spec.hyperparameters = {{"n_estimators", params.n_estimators},
                          {"max_features", to_string(params.max_features)},
                          {"max_depth", params.max_depth},
                          {"criterion", to_string(params.criterion)}};
  spec.seed = seed;
  return ForestModel(std::move(spec), std::move(trees), X.n_cols);
}

}  // namespace tbscreen
