#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "tbscreen/models/adaboost.hpp"
#include "tbscreen/models/common.hpp"
#include "tbscreen/models/forest.hpp"
#include "tbscreen/models/logistic.hpp"
#include "tbscreen/models/mlp.hpp"

namespace tbscreen {

inline constexpr std::array<double, 6> kLogGrid6 = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};

// Tuning options that leave the search space intact but bound per-point cost
// (integration tests shrink the MLP epoch budget; the protocol default is 200).
struct GridOptions {
  int mlp_epochs = 200;
};

// Fixed hyperparameter grids per family. Order matters: the tuner breaks
// score ties by earlier grid position.
inline std::vector<ModelSpec> hyperparameter_grid(ModelFamily family,
                                                  const GridOptions& options = {}) {
  std::vector<ModelSpec> grid;
  switch (family) {
    case ModelFamily::lr:
      for (double c : kLogGrid6) {
        ModelSpec s;
        s.family = ModelFamily::lr;
        s.hyperparameters = {{"C", c}};
        grid.push_back(std::move(s));
      }
      break;
    case ModelFamily::mlp: {
      const std::vector<std::vector<int>> schedules = {
          {256, 128, 64, 32, 16}, {128, 64, 32, 16, 8}, {64, 32, 16, 8, 4}};
      for (double alpha : kLogGrid6) {
        for (const auto& widths : schedules) {
          ModelSpec s;
          s.family = ModelFamily::mlp;
          s.hyperparameters = {{"alpha", alpha},
                               {"widths", widths},
                               {"epochs", options.mlp_epochs},
                               {"batch_size", 32},
                               {"learning_rate", 0.001}};
          grid.push_back(std::move(s));
        }
      }
      break;
    }
    case ModelFamily::rf:
      for (int n : {100, 300, 500}) {
        for (const char* mf : {"sqrt", "log2"}) {
          for (int depth : {4, 6, 8}) {
            for (const char* crit : {"gini", "entropy"}) {
              ModelSpec s;
              s.family = ModelFamily::rf;
              s.hyperparameters = {{"n_estimators", n},
                                   {"max_features", mf},
                                   {"max_depth", depth},
                                   {"criterion", crit}};
              grid.push_back(std::move(s));
            }
          }
        }
      }
      break;
    case ModelFamily::ab:
      for (int n : {10, 50, 100, 250, 500}) {
        for (double lr : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
          ModelSpec s;
          s.family = ModelFamily::ab;
          s.hyperparameters = {{"n_estimators", n}, {"learning_rate", lr}};
          grid.push_back(std::move(s));
        }
      }
      break;
  }
  return grid;
}

inline std::unique_ptr<TrainedModel> train_model(const ModelSpec& spec, const DataMatrix& X,
                                                 const std::vector<int>& y) {
  const nlohmann::json& h = spec.hyperparameters;
  switch (spec.family) {
    case ModelFamily::lr:
      return std::make_unique<LogisticModel>(train_lr(X, y, h.at("C").get<double>(), spec.seed));
    case ModelFamily::mlp: {
      MlpParams p;
      p.alpha = h.at("alpha").get<double>();
      p.widths = h.at("widths").get<std::vector<int>>();
      if (h.contains("epochs")) p.epochs = h.at("epochs").get<int>();
      if (h.contains("batch_size")) p.batch_size = h.at("batch_size").get<int>();
      if (h.contains("learning_rate")) p.learning_rate = h.at("learning_rate").get<double>();
      return std::make_unique<MlpModel>(train_mlp(X, y, p, spec.seed));
    }
    case ModelFamily::rf: {
      RfParams p;
      p.n_estimators = h.at("n_estimators").get<int>();
      p.max_features = feature_subset_from_string(h.at("max_features").get<std::string>());
      p.max_depth = h.at("max_depth").get<int>();
      p.criterion = split_criterion_from_string(h.at("criterion").get<std::string>());
      return std::make_unique<ForestModel>(train_rf(X, y, p, spec.seed));
    }
    case ModelFamily::ab: {
      AbParams p;
      p.n_estimators = h.at("n_estimators").get<int>();
      p.learning_rate = h.at("learning_rate").get<double>();
      return std::make_unique<AdaBoostModel>(train_adaboost(X, y, p, spec.seed));
    }
  }
  throw state_error("train_model: unreachable family");
}

// Families whose features should be z-scored before training; tree models
// take raw features.
inline bool family_wants_scaling(ModelFamily family) {
  return family == ModelFamily::lr || family == ModelFamily::mlp;
}

inline nlohmann::json model_to_json(const TrainedModel& model) {
  return {{"spec", model.spec().to_json()}, {"params", model.params_to_json()}};
}

inline std::unique_ptr<TrainedModel> model_from_json(const nlohmann::json& j) {
  ModelSpec spec = ModelSpec::from_json(j.at("spec"));
  const nlohmann::json& params = j.at("params");
  switch (spec.family) {
    case ModelFamily::lr:
      return std::make_unique<LogisticModel>(LogisticModel::from_json(std::move(spec), params));
    case ModelFamily::mlp:
      return std::make_unique<MlpModel>(MlpModel::from_json(std::move(spec), params));
    case ModelFamily::rf:
      return std::make_unique<ForestModel>(ForestModel::from_json(std::move(spec), params));
    case ModelFamily::ab:
      return std::make_unique<AdaBoostModel>(AdaBoostModel::from_json(std::move(spec), params));
  }
  throw state_error("model_from_json: unreachable family");
}

inline constexpr const char* kModelFormat = "tbscreen-model";
inline constexpr int kModelFormatVersion = 1;

inline void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  nlohmann::json j = {{"format", kModelFormat},
                      {"version", kModelFormatVersion},
                      {"model", model_to_json(model)}};
  write_file(path, j.dump(2) + "\n");
}

inline std::unique_ptr<TrainedModel> load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw schema_error("model file is not valid json: " + path.string() + " (" + e.what() + ")");
  }
  if (!j.contains("format") || j.at("format") != kModelFormat) {
    throw schema_error("not a model file: " + path.string());
  }
  if (j.at("version").get<int>() != kModelFormatVersion) {
    throw schema_error("unsupported model file version in " + path.string());
  }
  return model_from_json(j.at("model"));
}

}  // namespace tbscreen
