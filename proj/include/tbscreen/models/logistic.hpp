#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <vector>

#include "tbscreen/models/common.hpp"

namespace tbscreen {

// Objective for L2-regularized logistic regression with unpenalized bias:
//   L(w, b) = mean BCE + ||w||^2 / (2 C n)
// theta packs [w_0..w_{d-1}, b]. Returns the loss and writes the analytic
// gradient; tests compare this gradient against finite differences.
inline double lr_loss_grad(const DataMatrix& X, const std::vector<int>& y, double C,
                           const std::vector<double>& theta, std::vector<double>* grad) {
  const std::size_t n = X.n_rows;
  const std::size_t d = X.n_cols;
  if (theta.size() != d + 1) throw state_error("lr: theta size mismatch");
  const double b = theta[d];

  if (grad != nullptr) grad->assign(d + 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = X.row(i);
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += theta[j] * x[j];
    const double p = sigmoid(z);
    const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
    loss -= y[i] == 1 ? std::log(q) : std::log(1.0 - q);
    if (grad != nullptr) {
      const double r = p - static_cast<double>(y[i]);
      for (std::size_t j = 0; j < d; ++j) (*grad)[j] += r * x[j];
      (*grad)[d] += r;
    }
  }
  loss /= static_cast<double>(n);

  double reg = 0.0;
  for (std::size_t j = 0; j < d; ++j) reg += theta[j] * theta[j];
  loss += reg / (2.0 * C * static_cast<double>(n));

  if (grad != nullptr) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      (*grad)[j] = (*grad)[j] * inv_n + theta[j] / (C * static_cast<double>(n));
    }
    (*grad)[d] *= inv_n;
  }
  return loss;
}

class LogisticModel final : public TrainedModel {
 public:
  LogisticModel(ModelSpec spec, std::vector<double> weights, double bias)
      : TrainedModel(std::move(spec)), weights_(std::move(weights)), bias_(bias) {}

  ModelFamily family() const override { return ModelFamily::lr; }
  std::size_t n_features() const override { return weights_.size(); }

  double predict_one(const double* x) const override {
    double z = bias_;
    for (std::size_t j = 0; j < weights_.size(); ++j) z += weights_[j] * x[j];
    return sigmoid(z);
  }

  nlohmann::json params_to_json() const override {
    const std::vector<double> bias_block = {bias_};
    return {{"weights", base64_doubles(weights_)}, {"bias", base64_doubles(bias_block)}};
  }
  static LogisticModel from_json(ModelSpec spec, const nlohmann::json& params) {
    auto w = doubles_from_base64(params.at("weights").get<std::string>());
    auto b = doubles_from_base64(params.at("bias").get<std::string>());
    if (b.size() != 1) throw schema_error("lr params: bad bias block");
    return LogisticModel(std::move(spec), std::move(w), b[0]);
  }

  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }

 private:
  std::vector<double> weights_;
  double bias_;
};

namespace detail {

// L-BFGS two-loop recursion with Armijo backtracking. Deterministic: no
// randomness anywhere, cold start at zero.
inline std::vector<double> minimize_lbfgs(
    const std::function<double(const std::vector<double>&, std::vector<double>*)>& objective,
    std::size_t dim, int max_iters, double grad_tol,
    std::vector<double>* loss_trace = nullptr) {
  constexpr std::size_t kHistory = 10;
  constexpr double kArmijoC1 = 1e-4;

  std::vector<double> theta(dim, 0.0);
  std::vector<double> grad;
  double loss = objective(theta, &grad);
  if (loss_trace != nullptr) loss_trace->push_back(loss);

  std::deque<std::vector<double>> s_hist;
  std::deque<std::vector<double>> y_hist;
  std::deque<double> rho_hist;

  auto inf_norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };

  for (int iter = 0; iter < max_iters; ++iter) {
    if (inf_norm(grad) < grad_tol) break;

    // two-loop recursion for the search direction
    std::vector<double> q = grad;
    std::vector<double> alphas(s_hist.size());
    for (std::size_t h = s_hist.size(); h-- > 0;) {
      alphas[h] = rho_hist[h] * dot(s_hist[h], q);
      for (std::size_t i = 0; i < dim; ++i) q[i] -= alphas[h] * y_hist[h][i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) {
      const double yy = dot(y_hist.back(), y_hist.back());
      if (yy > 0.0) gamma = dot(s_hist.back(), y_hist.back()) / yy;
    }
    for (double& v : q) v *= gamma;
    for (std::size_t h = 0; h < s_hist.size(); ++h) {
      const double beta = rho_hist[h] * dot(y_hist[h], q);
      for (std::size_t i = 0; i < dim; ++i) q[i] += (alphas[h] - beta) * s_hist[h][i];
    }
    // q approximates H^{-1} g; descend along -q
    double dir_dot_grad = -dot(q, grad);
    if (dir_dot_grad >= 0.0) {  // fall back to steepest descent if curvature broke
      q = grad;
      dir_dot_grad = -dot(grad, grad);
      if (dir_dot_grad == 0.0) break;
    }

    double step = s_hist.empty() ? 1.0 / std::max(1.0, inf_norm(grad)) : 1.0;
    std::vector<double> trial(dim);
    std::vector<double> trial_grad;
    double trial_loss = loss;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < dim; ++i) trial[i] = theta[i] - step * q[i];
      trial_loss = objective(trial, &trial_grad);
      if (trial_loss <= loss + kArmijoC1 * step * dir_dot_grad) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line search exhausted; gradient is numerically flat

    std::vector<double> s(dim);
    std::vector<double> yv(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      s[i] = trial[i] - theta[i];
      yv[i] = trial_grad[i] - grad[i];
    }
    const double sy = dot(s, yv);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kHistory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    theta = std::move(trial);
    grad = std::move(trial_grad);
    loss = trial_loss;
    if (loss_trace != nullptr) loss_trace->push_back(loss);
  }
  return theta;
}

}  // namespace detail

// Quasi-Newton fit of the regularized BCE objective. Converges when the
// gradient infinity norm drops below 1e-6, capped at 5000 iterations.
inline LogisticModel train_lr(const DataMatrix& X, const std::vector<int>& y, double C,
                              std::uint64_t seed = 0,
                              std::vector<double>* loss_trace = nullptr) {
  if (C <= 0.0) throw config_error("lr: C must be positive");
  if (X.n_rows != y.size() || X.n_rows == 0) throw data_error("lr: bad training shape");
  require_finite(X, "lr");
  require_binary_labels(y, "lr");

  const std::size_t d = X.n_cols;
  auto objective = [&](const std::vector<double>& theta, std::vector<double>* grad) {
    return lr_loss_grad(X, y, C, theta, grad);
  };
  std::vector<double> theta =
      detail::minimize_lbfgs(objective, d + 1, 5000, 1e-6, loss_trace);

  ModelSpec spec;
  spec.family = ModelFamily::lr;
  spec.hyperparameters = {{"C", C}};
  spec.seed = seed;
  std::vector<double> w(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  return LogisticModel(std::move(spec), std::move(w), theta[d]);
}

}  // namespace tbscreen
