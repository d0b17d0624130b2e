#include "fslab/mlp.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fslab/errors.hpp"

namespace fslab {

namespace {

void check_same_shapes(const MlpParams& a, const MlpParams& b, const char* op) {
  if (a.layer_dims != b.layer_dims) {
    throw DataError(std::string(op) + ": parameter shapes differ");
  }
}

}  // namespace

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.data.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

MlpParams init_mlp(const std::vector<std::size_t>& layer_dims, RngStream& rng) {
  if (layer_dims.size() < 2) throw DataError("init_mlp: need at least input and output dims");
  MlpParams p;
  p.layer_dims = layer_dims;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    std::size_t fan_in = layer_dims[l];
    std::size_t fan_out = layer_dims[l + 1];
    Matrix w(fan_out, fan_in);
    double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.data) v = stddev * rng.gaussian();
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

MlpGrads zero_grads(const MlpParams& params) {
  MlpGrads g;
  for (const auto& w : params.weights) g.weights.emplace_back(w.rows, w.cols);
  for (const auto& b : params.biases) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

Matrix forward(const MlpParams& params, const Matrix& batch) {
  ForwardCache cache;
  return forward(params, batch, cache);
}

Matrix forward(const MlpParams& params, const Matrix& batch, ForwardCache& cache) {
  if (batch.cols != params.input_dim()) {
    throw DataError("forward: batch has " + std::to_string(batch.cols) +
                    " columns, encoder expects " + std::to_string(params.input_dim()));
  }
  cache.input = batch;
  cache.pre_activations.clear();
  cache.activations.clear();
  const Matrix* current = &batch;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    Matrix z = matmul_nt(*current, params.weights[l]);
    const auto& bias = params.biases[l];
    for (std::size_t i = 0; i < z.rows; ++i) {
      double* zrow = z.data.data() + i * z.cols;
      for (std::size_t j = 0; j < z.cols; ++j) zrow[j] += bias[j];
    }
    cache.pre_activations.push_back(z);
    if (l + 1 < params.num_layers()) {
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;  // rectifier on hidden layers
    }
    cache.activations.push_back(std::move(z));
    current = &cache.activations.back();
  }
  return cache.activations.back();
}

MlpGrads backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_output) {
  Matrix grad_input;
  return backward(params, cache, grad_output, grad_input);
}

MlpGrads backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_output,
                  Matrix& grad_input) {
  std::size_t layers = params.num_layers();
  if (cache.activations.size() != layers) throw DataError("backward: cache does not match params");
  if (!grad_output.same_shape(cache.activations.back())) {
    throw DataError("backward: grad_output shape does not match forward output");
  }
  MlpGrads grads = zero_grads(params);
  Matrix delta = grad_output;  // d(loss)/d(pre_activation of layer l)
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      // chain through the rectifier of layer l
      const Matrix& z = cache.pre_activations[l];
      for (std::size_t i = 0; i < delta.data.size(); ++i) {
        if (z.data[i] <= 0.0) delta.data[i] = 0.0;
      }
    }
    const Matrix& below = (l == 0) ? cache.input : cache.activations[l - 1];
    grads.weights[l] = matmul_tn(delta, below);
    auto& gb = grads.biases[l];
    for (std::size_t i = 0; i < delta.rows; ++i) {
      const double* drow = delta.data.data() + i * delta.cols;
      for (std::size_t j = 0; j < delta.cols; ++j) gb[j] += drow[j];
    }
    if (l > 0) {
      delta = matmul(delta, params.weights[l]);
    } else {
      grad_input = matmul(delta, params.weights[0]);
    }
  }
  return grads;
}

void sgd_step(MlpParams& params, const MlpGrads& grads, double lr, const SgdConfig& cfg,
              MlpGrads& velocity) {
  if (grads.weights.size() != params.num_layers() || velocity.weights.size() != params.num_layers()) {
    throw DataError("sgd_step: gradient shapes do not match parameters");
  }
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    if (!grads.weights[l].same_shape(params.weights[l]) ||
        grads.biases[l].size() != params.biases[l].size()) {
      throw DataError("sgd_step: gradient shapes do not match parameters");
    }
    if (!all_finite(grads.weights[l]) || !all_finite(std::span<const double>(grads.biases[l]))) {
      throw NumericError("diverged");
    }
    auto& w = params.weights[l].data;
    const auto& gw = grads.weights[l].data;
    auto& vw = velocity.weights[l].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      double g = gw[i] + cfg.weight_decay * w[i];
      vw[i] = cfg.momentum * vw[i] + g;
      w[i] -= lr * vw[i];
    }
    auto& b = params.biases[l];
    const auto& gb = grads.biases[l];
    auto& vb = velocity.biases[l];
    for (std::size_t i = 0; i < b.size(); ++i) {
      vb[i] = cfg.momentum * vb[i] + gb[i];  // biases are not decayed
      b[i] -= lr * vb[i];
    }
  }
}

double cosine_lr(std::size_t step, const SgdConfig& cfg) {
  if (cfg.total_steps == 0) throw DataError("cosine_lr: total_steps must be at least 1");
  if (step > cfg.total_steps) {
    throw DataError("cosine_lr: step " + std::to_string(step) + " out of range [0, " +
                    std::to_string(cfg.total_steps) + "]");
  }
  double progress = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void ema_update(MlpParams& theta_k, const MlpParams& theta_q, double ema_momentum) {
  check_same_shapes(theta_k, theta_q, "ema_update");
  if (ema_momentum < 0.0 || ema_momentum > 1.0) {
    throw DataError("ema_update: momentum must be in [0, 1]");
  }
  double m = ema_momentum;
  for (std::size_t l = 0; l < theta_k.num_layers(); ++l) {
    auto& wk = theta_k.weights[l].data;
    const auto& wq = theta_q.weights[l].data;
    for (std::size_t i = 0; i < wk.size(); ++i) wk[i] = m * wk[i] + (1.0 - m) * wq[i];
    auto& bk = theta_k.biases[l];
    const auto& bq = theta_q.biases[l];
    for (std::size_t i = 0; i < bk.size(); ++i) bk[i] = m * bk[i] + (1.0 - m) * bq[i];
  }
}

std::vector<double*> flatten(MlpParams& params) {
  std::vector<double*> out;
  out.reserve(params.num_parameters());
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    for (double& v : params.weights[l].data) out.push_back(&v);
    for (double& v : params.biases[l]) out.push_back(&v);
  }
  return out;
}

std::vector<const double*> flatten(const MlpParams& params) {
  std::vector<const double*> out;
  out.reserve(params.num_parameters());
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    for (const double& v : params.weights[l].data) out.push_back(&v);
    for (const double& v : params.biases[l]) out.push_back(&v);
  }
  return out;
}

std::vector<const double*> flatten(const MlpGrads& grads) {
  std::vector<const double*> out;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    for (const double& v : grads.weights[l].data) out.push_back(&v);
    for (const double& v : grads.biases[l]) out.push_back(&v);
  }
  return out;
}

double fd_max_rel_error(std::span<double* const> flat_params,
                        std::span<const double* const> analytic_grads,
                        const std::function<double()>& loss, double h) {
  if (flat_params.size() != analytic_grads.size()) {
    throw DataError("fd_max_rel_error: parameter and gradient counts differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < flat_params.size(); ++i) {
    double* p = flat_params[i];
    double original = *p;
    *p = original + h;
    double up = loss();
    *p = original - h;
    double down = loss();
    *p = original;
    double fd = (up - down) / (2.0 * h);
    double ga = *analytic_grads[i];
    double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

double gradient_check(
    MlpParams& params,
    const std::function<std::pair<double, MlpGrads>(const MlpParams&)>& loss_and_grad,
    double h) {
  auto [loss0, grads] = loss_and_grad(params);
  (void)loss0;
  auto flat_p = flatten(params);
  auto flat_g = flatten(grads);
  return fd_max_rel_error(flat_p, flat_g, [&] { return loss_and_grad(params).first; }, h);
}

}  // namespace fslab
