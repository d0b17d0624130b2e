#include "fslab/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fslab/errors.hpp"

namespace fslab {

namespace {

constexpr double kNormTolerance = 1e-6;

void check_unit_rows(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    if (std::abs(row_l2_norm(m.row(i)) - 1.0) > kNormTolerance) {
      throw DataError(std::string("embeddings must be normalized (") + what + " row " +
                      std::to_string(i) + ")");
    }
  }
}

double entry_stddev(const Matrix& m) {
  if (m.data.empty()) return 0.0;
  double mean = 0.0;
  for (double v : m.data) mean += v;
  mean /= static_cast<double>(m.data.size());
  double var = 0.0;
  for (double v : m.data) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(m.data.size()));
}

}  // namespace

void validate(const AugmentPolicy& policy) {
  if (policy.gaussian_sigma < 0.0 || policy.scale_jitter < 0.0) {
    throw DataError("augment policy: sigma and jitter must be non-negative");
  }
  if (policy.mask_fraction < 0.0 || policy.mask_fraction >= 1.0) {
    throw DataError("augment policy: mask_fraction must be in [0, 1)");
  }
  if (policy.gaussian_sigma == 0.0 && policy.mask_fraction == 0.0 && policy.scale_jitter == 0.0) {
    throw DataError("augment policy: all components zero, views would be identical");
  }
}

std::vector<double> augment_view(std::span<const double> x, const AugmentPolicy& policy,
                                 RngStream& rng) {
  std::vector<double> view(x.begin(), x.end());
  std::size_t d = view.size();
  if (policy.gaussian_sigma > 0.0) {
    for (double& v : view) v += policy.gaussian_sigma * rng.gaussian();
  }
  if (policy.mask_fraction > 0.0) {
    auto count = static_cast<std::size_t>(policy.mask_fraction * static_cast<double>(d) + 1e-9);
    auto masked = rng.choose(std::min(count, d), d);
    for (std::size_t j : masked) view[j] = 0.0;
  }
  if (policy.scale_jitter > 0.0) {
    double u = rng.uniform(-1.0, 1.0);
    double scale = 1.0 + policy.scale_jitter * u;
    for (double& v : view) v *= scale;
  }
  return view;
}

std::pair<std::vector<double>, std::vector<double>> augment_pair(std::span<const double> x,
                                                                 const AugmentPolicy& policy,
                                                                 RngStream& rng) {
  validate(policy);
  auto view_q = augment_view(x, policy, rng);
  auto view_k = augment_view(x, policy, rng);
  return {std::move(view_q), std::move(view_k)};
}

InfoNceResult info_nce(const Matrix& q, const Matrix& k_pos, const Matrix& queue,
                       std::size_t queue_rows, double tau) {
  if (!q.same_shape(k_pos)) throw DataError("info_nce: q and k_pos shapes differ");
  if (queue.cols != q.cols) throw DataError("info_nce: queue embedding dim differs from q");
  if (queue_rows == 0) throw DataError("info_nce: need at least one valid queue row");
  if (queue_rows > queue.rows) throw DataError("info_nce: queue_rows exceeds queue");
  if (tau <= 0.0) throw DataError("info_nce: tau must be positive");
  check_unit_rows(q, "q");
  check_unit_rows(k_pos, "k_pos");

  std::size_t b = q.rows;
  Matrix negatives(queue_rows, queue.cols);
  std::copy(queue.data.begin(), queue.data.begin() + queue_rows * queue.cols,
            negatives.data.begin());
  Matrix neg_logits = matmul_nt(q, negatives);  // b x queue_rows

  InfoNceResult result;
  result.grad_q = Matrix(b, q.cols);
  Matrix probs(b, queue_rows);  // softmax mass on each negative
  std::vector<double> logits(queue_rows + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double pos = 0.0;
    for (std::size_t j = 0; j < q.cols; ++j) pos += q(i, j) * k_pos(i, j);
    pos /= tau;
    logits[0] = pos;
    for (std::size_t j = 0; j < queue_rows; ++j) logits[j + 1] = neg_logits(i, j) / tau;
    double lse = log_sum_exp(logits);
    total += lse - pos;
    double p_pos = std::exp(pos - lse);
    for (std::size_t j = 0; j < queue_rows; ++j) probs(i, j) = std::exp(logits[j + 1] - lse);
    // d(loss_i)/d(q_i) = [(p_pos - 1) k_i + sum_j p_j queue_j] / (b tau)
    double coeff = (p_pos - 1.0) / (static_cast<double>(b) * tau);
    for (std::size_t j = 0; j < q.cols; ++j) result.grad_q(i, j) = coeff * k_pos(i, j);
  }
  Matrix neg_part = matmul(probs, negatives);  // b x d
  double scale = 1.0 / (static_cast<double>(b) * tau);
  for (std::size_t i = 0; i < neg_part.data.size(); ++i) {
    result.grad_q.data[i] += scale * neg_part.data[i];
  }
  result.loss = total / static_cast<double>(b);
  return result;
}

void enqueue(MocoState& state, const Matrix& keys) {
  std::size_t capacity = state.queue.rows;
  if (keys.rows > capacity) throw DataError("batch exceeds queue");
  if (keys.cols != state.queue.cols) throw DataError("enqueue: key dim differs from queue");
  check_unit_rows(keys, "keys");
  for (std::size_t r = 0; r < keys.rows; ++r) {
    std::size_t slot = (state.cursor + r) % capacity;
    std::copy(keys.row(r).begin(), keys.row(r).end(), state.queue.row(slot).begin());
  }
  state.cursor = (state.cursor + keys.rows) % capacity;
  state.filled = std::min(state.filled + keys.rows, capacity);
}

Matrix normalization_backward(const Matrix& grad_normalized, const Matrix& normalized,
                              const std::vector<double>& norms) {
  if (!grad_normalized.same_shape(normalized) || norms.size() != normalized.rows) {
    throw DataError("normalization_backward: shape mismatch");
  }
  Matrix out = grad_normalized;
  for (std::size_t i = 0; i < out.rows; ++i) {
    if (norms[i] == 0.0) continue;  // zero rows passed through untouched
    double dot = 0.0;
    for (std::size_t j = 0; j < out.cols; ++j) dot += grad_normalized(i, j) * normalized(i, j);
    for (std::size_t j = 0; j < out.cols; ++j) {
      out(i, j) = (grad_normalized(i, j) - dot * normalized(i, j)) / norms[i];
    }
  }
  return out;
}

std::pair<double, MlpGrads> ssl_loss_and_grad(const MlpParams& theta_q, const Matrix& batch_q,
                                              const Matrix& k_pos, const Matrix& queue,
                                              std::size_t queue_rows, double tau) {
  ForwardCache cache;
  Matrix raw = forward(theta_q, batch_q, cache);
  std::vector<double> norms;
  Matrix q = l2_normalize_rows(raw, norms);
  InfoNceResult nce = info_nce(q, k_pos, queue, queue_rows, tau);
  Matrix grad_raw = normalization_backward(nce.grad_q, q, norms);
  MlpGrads grads = backward(theta_q, cache, grad_raw);
  return {nce.loss, std::move(grads)};
}

SslResult train_ssl(const Matrix& data, const SslConfig& cfg) {
  if (data.rows < cfg.batch_size) throw DataError("train_ssl: dataset smaller than one batch");
  if (cfg.batch_size < 2) throw DataError("train_ssl: batch_size must be at least 2");
  if (cfg.queue_size == 0) throw DataError("train_ssl: queue_size must be at least 1");
  if (cfg.tau <= 0.0) throw DataError("train_ssl: tau must be positive");

  AugmentPolicy policy = cfg.policy;
  if (cfg.noise_scale >= 0.0) policy.gaussian_sigma = cfg.noise_scale * entry_stddev(data);
  validate(policy);

  std::vector<std::size_t> dims;
  dims.push_back(data.cols);
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.emb_dim);

  RngStream init_rng(cfg.seed, stream_id(StreamPurpose::train_init));
  RngStream shuffle_rng(cfg.seed, stream_id(StreamPurpose::train_shuffle));
  RngStream augment_rng(cfg.seed, stream_id(StreamPurpose::train_augment));

  MocoState state;
  state.theta_q = init_mlp(dims, init_rng);
  state.theta_k = state.theta_q;
  state.queue = Matrix(cfg.queue_size, cfg.emb_dim);
  state.tau = cfg.tau;
  state.ema_momentum = cfg.ema_momentum;

  std::size_t steps_per_epoch = data.rows / cfg.batch_size;  // last partial batch dropped
  SgdConfig sgd = cfg.sgd;
  sgd.total_steps = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);

  MlpGrads velocity = zero_grads(state.theta_q);
  SslResult result;
  result.trace.reserve(cfg.epochs * steps_per_epoch);

  std::size_t step = 0;
  Matrix batch_q(cfg.batch_size, data.cols);
  Matrix batch_k(cfg.batch_size, data.cols);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = shuffle_rng.permutation(data.rows);
    for (std::size_t block = 0; block < steps_per_epoch; ++block) {
      for (std::size_t r = 0; r < cfg.batch_size; ++r) {
        auto [vq, vk] = augment_pair(data.row(order[block * cfg.batch_size + r]), policy, augment_rng);
        std::copy(vq.begin(), vq.end(), batch_q.row(r).begin());
        std::copy(vk.begin(), vk.end(), batch_k.row(r).begin());
      }
      Matrix keys = l2_normalize_rows(forward(state.theta_k, batch_k));
      double lr = cosine_lr(step, sgd);
      double loss = 0.0;
      if (state.filled == 0) {
        // Empty memory: the objective has no negatives yet, which makes the
        // loss identically zero with zero gradient. Seed the queue and move on.
        enqueue(state, keys);
      } else {
        auto [nce_loss, grads] =
            ssl_loss_and_grad(state.theta_q, batch_q, keys, state.queue, state.filled, state.tau);
        loss = nce_loss;
        if (!std::isfinite(loss)) {
          throw NumericError("diverged at step " + std::to_string(step));
        }
        sgd_step(state.theta_q, grads, lr, sgd, velocity);
        ema_update(state.theta_k, state.theta_q, state.ema_momentum);
        enqueue(state, keys);
      }
      result.trace.push_back({step, epoch, lr, loss});
      ++step;
    }
  }
  result.encoder = std::move(state.theta_q);
  return result;
}

}  // namespace fslab
