#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "tbscreen/models/common.hpp"

namespace tbscreen {

struct MlpParams {
  double alpha = 1e-4;              // L2 coefficient on weights (biases unpenalized)
  std::vector<int> widths;          // 5 hidden layers, strictly decreasing
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 0.001;     // Adam step size

  void validate() const {
    if (widths.size() != 5) throw config_error("mlp: exactly 5 hidden layers required");
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (widths[i] < 1) throw config_error("mlp: layer width must be >= 1");
      if (i > 0 && widths[i] >= widths[i - 1]) {
        throw config_error("mlp: layer widths must be strictly decreasing");
      }
    }
    if (alpha < 0.0) throw config_error("mlp: alpha must be >= 0");
    if (epochs < 1 || batch_size < 1) throw config_error("mlp: epochs and batch size >= 1");
    if (learning_rate <= 0.0) throw config_error("mlp: learning rate must be positive");
  }
};

// Fully connected ReLU network with a single sigmoid output unit. Layer l
// maps layer_sizes[l] inputs to layer_sizes[l+1] outputs; weights are
// row-major (out x in).
struct MlpNetwork {
  std::vector<std::size_t> layer_sizes;          // input, hidden..., 1
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  std::size_t n_layers() const { return weights.size(); }

  void init_he(std::uint64_t seed) {
    RandomStream rng(seed);
    weights.clear();
    biases.clear();
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      const std::size_t fan_in = layer_sizes[l];
      const std::size_t fan_out = layer_sizes[l + 1];
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
      std::vector<double> w(fan_out * fan_in);
      for (double& v : w) v = rng.normal() * scale;
      weights.push_back(std::move(w));
      biases.emplace_back(fan_out, 0.0);
    }
  }

  // Forward pass storing pre-activations per layer when acts != nullptr
  // (needed by backprop); returns the output probability.
  double forward(const double* x, std::vector<std::vector<double>>* acts = nullptr) const {
    std::vector<double> cur(x, x + layer_sizes.front());
    if (acts != nullptr) {
      acts->clear();
      acts->push_back(cur);
    }
    for (std::size_t l = 0; l < n_layers(); ++l) {
      const std::size_t in = layer_sizes[l];
      const std::size_t out = layer_sizes[l + 1];
      std::vector<double> next(out);
      for (std::size_t o = 0; o < out; ++o) {
        double z = biases[l][o];
        const double* wrow = weights[l].data() + o * in;
        for (std::size_t i = 0; i < in; ++i) z += wrow[i] * cur[i];
        next[o] = z;
      }
      const bool last = l + 1 == n_layers();
      if (!last) {
        for (double& v : next) v = std::max(0.0, v);  // ReLU
      }
      if (acts != nullptr) acts->push_back(next);
      cur = std::move(next);
    }
    return sigmoid(cur[0]);
  }
};

namespace detail {

struct MlpGradient {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  void zero_like(const MlpNetwork& net) {
    weights.clear();
    biases.clear();
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
      weights.emplace_back(net.weights[l].size(), 0.0);
      biases.emplace_back(net.biases[l].size(), 0.0);
    }
  }
};

// Mean BCE over the given rows plus alpha/(2B) * sum of squared weights,
// B = row count. Accumulates the analytic gradient when grad != nullptr.
inline double mlp_loss_grad(const MlpNetwork& net, const DataMatrix& X,
                            const std::vector<int>& y, const std::vector<std::size_t>& rows,
                            double alpha, MlpGradient* grad) {
  const double batch = static_cast<double>(rows.size());
  if (grad != nullptr) grad->zero_like(net);

  double loss = 0.0;
  std::vector<std::vector<double>> acts;
  for (std::size_t r : rows) {
    const double p = net.forward(X.row(r), grad != nullptr ? &acts : nullptr);
    const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
    loss -= y[r] == 1 ? std::log(q) : std::log(1.0 - q);
    if (grad == nullptr) continue;

    // delta at the sigmoid output under BCE is (p - y)
    std::vector<double> delta = {(p - static_cast<double>(y[r])) / batch};
    for (std::size_t l = net.n_layers(); l-- > 0;) {
      const std::size_t in = net.layer_sizes[l];
      const std::size_t out = net.layer_sizes[l + 1];
      const std::vector<double>& a_in = acts[l];  // post-activation of layer l input
      for (std::size_t o = 0; o < out; ++o) {
        grad->biases[l][o] += delta[o];
        double* grow = grad->weights[l].data() + o * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += delta[o] * a_in[i];
      }
      if (l == 0) break;
      std::vector<double> prev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double* wrow = net.weights[l].data() + o * in;
        for (std::size_t i = 0; i < in; ++i) prev[i] += wrow[i] * delta[o];
      }
      // ReLU derivative gates on the stored pre/post activation (equal signs)
      for (std::size_t i = 0; i < in; ++i) {
        if (acts[l][i] <= 0.0) prev[i] = 0.0;
      }
      delta = std::move(prev);
    }
  }
  loss /= batch;

  double reg = 0.0;
  for (const auto& w : net.weights) {
    for (double v : w) reg += v * v;
  }
  loss += alpha * reg / (2.0 * batch);
  if (grad != nullptr) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
      for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
        grad->weights[l][i] += alpha * net.weights[l][i] / batch;
      }
    }
  }
  return loss;
}

}  // namespace detail

class MlpModel final : public TrainedModel {
 public:
  MlpModel(ModelSpec spec, MlpNetwork net) : TrainedModel(std::move(spec)), net_(std::move(net)) {}

  ModelFamily family() const override { return ModelFamily::mlp; }
  std::size_t n_features() const override { return net_.layer_sizes.front(); }
  double predict_one(const double* x) const override { return net_.forward(x); }

  nlohmann::json params_to_json() const override {
    nlohmann::json j;
    j["layer_sizes"] = net_.layer_sizes;
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (std::size_t l = 0; l < net_.n_layers(); ++l) {
      weights.push_back(base64_doubles(net_.weights[l]));
      biases.push_back(base64_doubles(net_.biases[l]));
    }
    j["weights"] = std::move(weights);
    j["biases"] = std::move(biases);
    return j;
  }
  static MlpModel from_json(ModelSpec spec, const nlohmann::json& params) {
    MlpNetwork net;
    net.layer_sizes = params.at("layer_sizes").get<std::vector<std::size_t>>();
    for (const auto& b : params.at("weights")) {
      net.weights.push_back(doubles_from_base64(b.get<std::string>()));
    }
    for (const auto& b : params.at("biases")) {
      net.biases.push_back(doubles_from_base64(b.get<std::string>()));
    }
    if (net.weights.size() + 1 != net.layer_sizes.size() ||
        net.biases.size() != net.weights.size()) {
      throw schema_error("mlp params: inconsistent layer blocks");
    }
    return MlpModel(std::move(spec), std::move(net));
  }

  const MlpNetwork& network() const { return net_; }

 private:
  MlpNetwork net_;
};

// Adam over seeded mini-batch shuffles for a fixed epoch budget; no early
// stopping, so identical (data, params, seed) give identical weights.
inline MlpModel train_mlp(const DataMatrix& X, const std::vector<int>& y, const MlpParams& params,
                          std::uint64_t seed) {
  params.validate();
  if (X.n_rows != y.size() || X.n_rows == 0) throw data_error("mlp: bad training shape");
  require_finite(X, "mlp");
  require_binary_labels(y, "mlp");

  MlpNetwork net;
  net.layer_sizes.push_back(X.n_cols);
  for (int w : params.widths) net.layer_sizes.push_back(static_cast<std::size_t>(w));
  net.layer_sizes.push_back(1);
  net.init_he(derive_seed(seed, {"mlp", "init"}));

  detail::MlpGradient grad;
  detail::MlpGradient m_acc;
  detail::MlpGradient v_acc;
  m_acc.zero_like(net);
  v_acc.zero_like(net);

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  long step = 0;

  RandomStream shuffle_rng(derive_seed(seed, {"mlp", "shuffle"}));
  std::vector<std::size_t> order(X.n_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(params.batch_size));
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      detail::mlp_loss_grad(net, X, y, batch, params.alpha, &grad);

      ++step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t l = 0; l < net.n_layers(); ++l) {
        auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
          for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            theta[i] -= params.learning_rate * mh / (std::sqrt(vh) + kEps);
          }
        };
        update(net.weights[l], grad.weights[l], m_acc.weights[l], v_acc.weights[l]);
        update(net.biases[l], grad.biases[l], m_acc.biases[l], v_acc.biases[l]);
      }
    }
  }

  ModelSpec spec;
  spec.family = ModelFamily::mlp;
  spec.hyperparameters = {{"alpha", params.alpha},
                          {"widths", params.widths},
                          {"epochs", params.epochs},
                          {"batch_size", params.batch_size},
                          {"learning_rate", params.learning_rate}};
  spec.seed = seed;
  return MlpModel(std::move(spec), std::move(net));
}

}  // namespace tbscreen
