#pragma once

#include <cstdint>
#include <vector>

#include "fslab/matrix.hpp"
#include "fslab/mlp.hpp"
#include "fslab/rng.hpp"

namespace fslab {

// Stochastic vector-space views standing in for image augmentation: additive
// Gaussian noise, random coordinate masking, global scale jitter.
struct AugmentPolicy {
  double gaussian_sigma = 0.0;
  double mask_fraction = 0.2;
  double scale_jitter = 0.1;
};

// Throws unless at least one component is strictly positive (otherwise the
// two views coincide and instance discrimination is degenerate).
void validate(const AugmentPolicy& policy);

struct SslConfig {
  std::vector<std::size_t> hidden_dims{128, 128};
  std::size_t emb_dim = 128;
  std::size_t batch_size = 256;
  std::size_t queue_size = 256;
  double tau = 0.07;
  double ema_momentum = 0.5;
  std::size_t epochs = 20;
  SgdConfig sgd;
  AugmentPolicy policy;
  // When >= 0, gaussian_sigma is set to noise_scale * std(training data).
  double noise_scale = 0.1;
  std::uint64_t seed = 0;
};

// Query/key encoder pair with the FIFO memory of recent key embeddings.
struct MocoState {
  MlpParams theta_q;
  MlpParams theta_k;
  Matrix queue;         // queue_size x emb_dim, rows unit-norm once written
  std::size_t cursor = 0;
  std::size_t filled = 0;
  double tau = 0.07;
  double ema_momentum = 0.5;
};

struct SslResult {
  MlpParams encoder;  // the trained query encoder
  std::vector<TraceRow> trace;
};

// Two independent stochastic views of x; the second view continues the same
// RNG stream, so the draws never overlap.
std::pair<std::vector<double>, std::vector<double>> augment_pair(std::span<const double> x,
                                                                 const AugmentPolicy& policy,
                                                                 RngStream& rng);
std::vector<double> augment_view(std::span<const double> x, const AugmentPolicy& policy,
                                 RngStream& rng);

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad_q;  // d(loss)/d(q), positives and queue treated as constants
};

// Mean over the batch of -log( exp(q_i.k_i/tau) / (exp(q_i.k_i/tau) +
// sum_j exp(q_i.queue_j/tau)) ), evaluated through log_sum_exp. Rows of q and
// k_pos must be unit-norm within 1e-6. queue_rows is the number of valid
// negative rows (>= 1).
InfoNceResult info_nce(const Matrix& q, const Matrix& k_pos, const Matrix& queue,
                       std::size_t queue_rows, double tau);

// Writes keys at the cursor with wraparound; oldest entries are overwritten.
void enqueue(MocoState& state, const Matrix& keys);

// Chains a gradient w.r.t. row-normalized embeddings back to the raw rows.
// norms are the pre-normalization row norms (0 marks a passed-through zero row).
Matrix normalization_backward(const Matrix& grad_normalized, const Matrix& normalized,
                              const std::vector<double>& norms);

// Loss and gradient of the full query path: raw batch -> encoder -> row
// normalization -> contrastive loss against fixed keys and queue.
std::pair<double, MlpGrads> ssl_loss_and_grad(const MlpParams& theta_q, const Matrix& batch_q,
                                              const Matrix& k_pos, const Matrix& queue,
                                              std::size_t queue_rows, double tau);

// Momentum-contrast training on unlabeled examples; returns the query encoder
// and the per-step loss trace.
SslResult train_ssl(const Matrix& data, const SslConfig& cfg);

}  // namespace fslab
