#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tbscreen/error.hpp"
#include "tbscreen/util.hpp"

namespace tbscreen {

enum class ModelFamily { lr, mlp, rf, ab };

inline ModelFamily model_family_from_string(const std::string& s) {
  if (s == "lr") return ModelFamily::lr;
  if (s == "mlp") return ModelFamily::mlp;
  if (s == "rf") return ModelFamily::rf;
  if (s == "ab") return ModelFamily::ab;
  throw config_error("unknown model family: " + s);
}

inline const char* to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::lr: return "lr";
    case ModelFamily::mlp: return "mlp";
    case ModelFamily::rf: return "rf";
    default: return "ab";
  }
}

// Row-major numeric matrix; the common currency of training and prediction.
struct DataMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;

  DataMatrix() = default;
  DataMatrix(std::size_t rows, std::size_t cols) : n_rows(rows), n_cols(cols), data(rows * cols) {}

  double* row(std::size_t i) { return data.data() + i * n_cols; }
  const double* row(std::size_t i) const { return data.data() + i * n_cols; }
  double& at(std::size_t i, std::size_t j) { return data[i * n_cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * n_cols + j]; }

  static DataMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    DataMatrix m;
    m.n_rows = rows.size();
    m.n_cols = rows.empty() ? 0 : rows.front().size();
    m.data.reserve(m.n_rows * m.n_cols);
    for (const auto& r : rows) {
      if (r.size() != m.n_cols) throw state_error("from_rows: ragged input");
      m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
  }
};

inline void require_finite(const DataMatrix& X, const char* who) {
  for (double v : X.data) {
    if (!std::isfinite(v)) throw data_error(std::string(who) + ": non-finite feature value");
  }
}

inline void require_binary_labels(const std::vector<int>& y, const char* who) {
  bool has_pos = false;
  bool has_neg = false;
  for (int v : y) {
    if (v == 1) {
      has_pos = true;
    } else if (v == 0) {
      has_neg = true;
    } else {
      throw data_error(std::string(who) + ": labels must be 0/1");
    }
  }
  if (!has_pos || !has_neg) {
    throw data_error(std::string(who) + ": training data must contain both classes");
  }
}

// Numerically stable logistic function.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Mean binary cross-entropy of probabilities against 0/1 labels, clamped
// away from the log singularities.
inline double mean_bce(const std::vector<double>& p, const std::vector<int>& y) {
  if (p.size() != y.size() || p.empty()) throw state_error("bce: size mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], 1e-12, 1.0 - 1e-12);
    loss -= y[i] == 1 ? std::log(q) : std::log(1.0 - q);
  }
  return loss / static_cast<double>(p.size());
}

// A hyperparameter point for one family, as produced by hyperparameter_grid
// or a config override. Hyperparameters live in a JSON object so grids stay
// uniform across families.
struct ModelSpec {
  ModelFamily family = ModelFamily::lr;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"family", to_string(family)}, {"hyperparameters", hyperparameters}, {"seed", seed}};
  }
  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.family = model_family_from_string(j.at("family").get<std::string>());
    s.hyperparameters = j.at("hyperparameters");
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  }
};

// Fitted classifier with probability outputs. Concrete families implement
// predict_one plus a JSON parameter payload round-trippable to bit-identical
// predictions.
class TrainedModel {
 public:
  virtual ~TrainedModel() = default;

  virtual ModelFamily family() const = 0;
  virtual std::size_t n_features() const = 0;
  virtual double predict_one(const double* x) const = 0;
  virtual nlohmann::json params_to_json() const = 0;

  const ModelSpec& spec() const { return spec_; }

  std::vector<double> predict_proba(const DataMatrix& X) const {
    if (X.n_cols != n_features()) {
      throw data_error("predict: feature layout mismatch, model expects " +
                       std::to_string(n_features()) + " columns, got " + std::to_string(X.n_cols));
    }
    std::vector<double> out(X.n_rows);
    for (std::size_t i = 0; i < X.n_rows; ++i) out[i] = predict_one(X.row(i));
    return out;
  }

 protected:
  explicit TrainedModel(ModelSpec spec) : spec_(std::move(spec)) {}
  ModelSpec spec_;
};

}  // namespace tbscreen
