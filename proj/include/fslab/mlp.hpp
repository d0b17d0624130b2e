#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fslab/matrix.hpp"
#include "fslab/rng.hpp"

namespace fslab {

// Fully connected net: rectifier on hidden layers, linear output layer.
// weights[i] maps layer_dims[i] -> layer_dims[i+1] and has shape
// layer_dims[i+1] x layer_dims[i]; biases[i] has length layer_dims[i+1].
struct MlpParams {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t num_parameters() const;
};

// Gradients (or SGD velocity) in the same shapes as MlpParams.
struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

// Per-layer pre-activations and activations for one batch, kept for backprop.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;  // post-rectifier; last entry is the linear output
};

struct SgdConfig {
  double base_lr = 0.03;
  std::size_t total_steps = 1;
  double weight_decay = 1e-4;
  double momentum = 0.9;
};

// One line of a training-loss trace.
struct TraceRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

// Weights ~ Gaussian(0, 2/fan_in), biases zero.
MlpParams init_mlp(const std::vector<std::size_t>& layer_dims, RngStream& rng);

MlpGrads zero_grads(const MlpParams& params);

Matrix forward(const MlpParams& params, const Matrix& batch);
Matrix forward(const MlpParams& params, const Matrix& batch, ForwardCache& cache);

// Reverse accumulation of d(loss)/d(every weight and bias) given
// d(loss)/d(output). Also returns d(loss)/d(input) for callers that chain
// further back (e.g. a backbone below a classification head).
MlpGrads backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_output);
MlpGrads backward(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_output,
                  Matrix& grad_input);

// params <- params - lr * velocity, velocity folding in momentum and
// weight decay. Throws NumericError("diverged") on non-finite gradients.
void sgd_step(MlpParams& params, const MlpGrads& grads, double lr, const SgdConfig& cfg,
              MlpGrads& velocity);

// base_lr * (1 + cos(pi * step / total_steps)) / 2, step in [0, total_steps].
double cosine_lr(std::size_t step, const SgdConfig& cfg);

// theta_k <- m * theta_k + (1 - m) * theta_q, every weight and bias.
void ema_update(MlpParams& theta_k, const MlpParams& theta_q, double ema_momentum);

// Pointers to every parameter scalar, in a fixed layer-major order.
std::vector<double*> flatten(MlpParams& params);
std::vector<const double*> flatten(const MlpParams& params);
std::vector<const double*> flatten(const MlpGrads& grads);

// Central finite differences (step h) of loss() against analytic_grads over
// the parameters reachable through flat pointers. Returns the max over
// parameters of |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
double fd_max_rel_error(std::span<double* const> flat_params,
                        std::span<const double* const> analytic_grads,
                        const std::function<double()>& loss, double h = 1e-5);

// Convenience wrapper for whole-net checks: loss_and_grad must return the
// loss and fill gradients for `params`.
double gradient_check(
    MlpParams& params,
    const std::function<std::pair<double, MlpGrads>(const MlpParams&)>& loss_and_grad,
    double h = 1e-5);

}  // namespace fslab
