#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tbscreen/models/common.hpp"

namespace tbscreen {

struct AbParams {
  int n_estimators = 50;
  double learning_rate = 1.0;

  void validate() const {
    if (n_estimators < 1) throw config_error("adaboost: n_estimators must be >= 1");
    if (learning_rate <= 0.0) throw config_error("adaboost: learning rate must be positive");
  }
};

// Depth-1 weak learner: h(x) = polarity if x[feature] > threshold else
// -polarity, with polarity in {-1, +1}.
struct Stump {
  int feature = 0;
  double threshold = 0.0;
  int polarity = 1;

  int predict(const double* x) const {
    return x[feature] > threshold ? polarity : -polarity;
  }
};

class AdaBoostModel final : public TrainedModel {
 public:
  AdaBoostModel(ModelSpec spec, std::vector<Stump> stumps, std::vector<double> alphas,
                std::size_t n_features)
      : TrainedModel(std::move(spec)),
        stumps_(std::move(stumps)),
        alphas_(std::move(alphas)),
        n_features_(n_features) {}

  ModelFamily family() const override { return ModelFamily::ab; }
  std::size_t n_features() const override { return n_features_; }

  double margin(const double* x) const {
    double f = 0.0;
    for (std::size_t m = 0; m < stumps_.size(); ++m) {
      f += alphas_[m] * static_cast<double>(stumps_[m].predict(x));
    }
    return f;
  }

  // Logistic link on the aggregated margin: monotone, so ranking metrics see
  // the raw boosted score.
  double predict_one(const double* x) const override { return sigmoid(margin(x)); }

  nlohmann::json params_to_json() const override {
    std::vector<int> features;
    std::vector<int> polarities;
    std::vector<double> thresholds;
    for (const Stump& s : stumps_) {
      features.push_back(s.feature);
      polarities.push_back(s.polarity);
      thresholds.push_back(s.threshold);
    }
    return {{"n_features", n_features_},
            {"features", features},
            {"polarities", polarities},
            {"thresholds", base64_doubles(thresholds)},
            {"alphas", base64_doubles(alphas_)}};
  }
  static AdaBoostModel from_json(ModelSpec spec, const nlohmann::json& params) {
    const auto features = params.at("features").get<std::vector<int>>();
    const auto polarities = params.at("polarities").get<std::vector<int>>();
    const auto thresholds = doubles_from_base64(params.at("thresholds").get<std::string>());
    const auto alphas = doubles_from_base64(params.at("alphas").get<std::string>());
    if (features.size() != polarities.size() || features.size() != thresholds.size() ||
        features.size() != alphas.size()) {
      throw schema_error("adaboost params: inconsistent stump blocks");
    }
    std::vector<Stump> stumps(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
      stumps[i] = {features[i], thresholds[i], polarities[i]};
    }
    return AdaBoostModel(std::move(spec), std::move(stumps), alphas,
                         params.at("n_features").get<std::size_t>());
  }

  const std::vector<Stump>& stumps() const { return stumps_; }
  const std::vector<double>& alphas() const { return alphas_; }

 private:
  std::vector<Stump> stumps_;
  std::vector<double> alphas_;
  std::size_t n_features_;
};

namespace detail {

// Best stump under the given weights (sum 1). Sweeps every feature in index
// order and every interior midpoint threshold ascending, both polarities, and
// keeps the strictly best error. Initializing at 0.5 rejects uninformative
// stumps; the strict < makes the search symmetric under label flips.
inline bool best_stump(const DataMatrix& X, const std::vector<int>& y,
                       const std::vector<double>& weights,
                       const std::vector<std::vector<std::size_t>>& sorted_idx, Stump* out,
                       double* out_err) {
  double w_pos_total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1) w_pos_total += weights[i];
  }
  const double w_neg_total = 1.0 - w_pos_total;

  double best_err = 0.5;
  bool found = false;

  for (std::size_t f = 0; f < X.n_cols; ++f) {
    const std::vector<std::size_t>& order = sorted_idx[f];
    double left_pos = 0.0;
    double left_neg = 0.0;
    for (std::size_t i = 1; i < order.size(); ++i) {
      const std::size_t prev = order[i - 1];
      if (y[prev] == 1) {
        left_pos += weights[prev];
      } else {
        left_neg += weights[prev];
      }
      const double v_prev = X.at(prev, f);
      const double v_cur = X.at(order[i], f);
      if (v_cur <= v_prev) continue;  // not a boundary between distinct values

      // polarity +1: right side predicted positive
      const double err_plus = left_pos + (w_neg_total - left_neg);
      const double threshold = (v_prev + v_cur) / 2.0;
      if (err_plus < best_err) {
        best_err = err_plus;
        *out = {static_cast<int>(f), threshold, 1};
        found = true;
      }
      const double err_minus = 1.0 - err_plus;
      if (err_minus < best_err) {
        best_err = err_minus;
        *out = {static_cast<int>(f), threshold, -1};
        found = true;
      }
    }
  }
  *out_err = best_err;
  return found;
}

}  // namespace detail

// Discrete AdaBoost over depth-1 stumps: alpha_m = lr * ln((1-err)/err),
// misclassified weights scaled by exp(alpha), renormalized each round. Stops
// early when no stump beats chance or a stump is perfect.
inline AdaBoostModel train_adaboost(const DataMatrix& X, const std::vector<int>& y,
                                    const AbParams& params, std::uint64_t seed = 0) {
  params.validate();
  if (X.n_rows != y.size() || X.n_rows == 0) throw data_error("adaboost: bad training shape");
  require_finite(X, "adaboost");
  require_binary_labels(y, "adaboost");

  const std::size_t n = X.n_rows;
  std::vector<std::vector<std::size_t>> sorted_idx(X.n_cols);
  for (std::size_t f = 0; f < X.n_cols; ++f) {
    sorted_idx[f].resize(n);
    std::iota(sorted_idx[f].begin(), sorted_idx[f].end(), std::size_t{0});
    std::stable_sort(sorted_idx[f].begin(), sorted_idx[f].end(),
                     [&](std::size_t a, std::size_t b) { return X.at(a, f) < X.at(b, f); });
  }

  std::vector<double> weights(n, 1.0 / static_cast<double>(n));
  std::vector<Stump> stumps;
  std::vector<double> alphas;

  for (int m = 0; m < params.n_estimators; ++m) {
    Stump stump;
    double err = 0.5;
    if (!detail::best_stump(X, y, weights, sorted_idx, &stump, &err)) break;

    const double eps = std::max(err, 1e-12);
    const double alpha = params.learning_rate * std::log((1.0 - eps) / eps);
    stumps.push_back(stump);
    alphas.push_back(alpha);
    if (err == 0.0) break;  // perfect stump; further rounds would be degenerate

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int truth = y[i] == 1 ? 1 : -1;
      if (stump.predict(X.row(i)) != truth) weights[i] *= std::exp(alpha);
      total += weights[i];
    }
    for (double& w : weights) w /= total;
  }

  ModelSpec spec;
  spec.family = ModelFamily::ab;
  spec.hyperparameters = {{"n_estimators", params.n_estimators},
                          {"learning_rate", params.learning_rate}};
  spec.seed = seed;
  return AdaBoostModel(std::move(spec), std::move(stumps), std::move(alphas), X.n_cols);
}

}  // namespace tbscreen
