#include "fslab/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "fslab/contrastive.hpp"
#include "fslab/errors.hpp"
#include "fslab/rng.hpp"

namespace fslab {

std::pair<double, Matrix> cross_entropy(const Matrix& logits, std::span<const std::int32_t> labels) {
  if (labels.size() != logits.rows) throw DataError("cross_entropy: one label per row required");
  std::size_t b = logits.rows;
  std::size_t classes = logits.cols;
  Matrix grad(b, classes);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(y) + " out of range [0, " +
                      std::to_string(classes) + ")");
    }
    double lse = log_sum_exp(logits.row(i));
    total += lse - logits(i, static_cast<std::size_t>(y));
    for (std::size_t c = 0; c < classes; ++c) {
      double p = std::exp(logits(i, c) - lse);
      grad(i, c) = (p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) / static_cast<double>(b);
    }
  }
  return {total / static_cast<double>(b), std::move(grad)};
}

Matrix forward_logits(const SupModel& model, const Matrix& batch) {
  Matrix emb = forward(model.backbone, batch);
  Matrix logits = matmul_nt(emb, model.head_weight);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double* row = logits.data.data() + i * logits.cols;
    for (std::size_t j = 0; j < logits.cols; ++j) row[j] += model.head_bias[j];
  }
  return logits;
}

std::pair<double, SupGrads> sup_loss_and_grad(const SupModel& model, const Matrix& batch,
                                              std::span<const std::int32_t> labels) {
  ForwardCache cache;
  Matrix emb = forward(model.backbone, batch, cache);
  Matrix logits = matmul_nt(emb, model.head_weight);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double* row = logits.data.data() + i * logits.cols;
    for (std::size_t j = 0; j < logits.cols; ++j) row[j] += model.head_bias[j];
  }
  auto [loss, grad_logits] = cross_entropy(logits, labels);

  SupGrads grads;
  grads.head_weight = matmul_tn(grad_logits, emb);  // C x emb
  grads.head_bias.assign(model.head_bias.size(), 0.0);
  for (std::size_t i = 0; i < grad_logits.rows; ++i) {
    for (std::size_t j = 0; j < grad_logits.cols; ++j) grads.head_bias[j] += grad_logits(i, j);
  }
  Matrix grad_emb = matmul(grad_logits, model.head_weight);  // b x emb
  grads.backbone = backward(model.backbone, cache, grad_emb);
  return {loss, std::move(grads)};
}

SupResult train_supervised(const Matrix& data, std::span<const std::int32_t> labels,
                           const SupConfig& cfg) {
  if (labels.size() != data.rows) throw DataError("train_supervised: one label per row required");
  if (data.rows < cfg.batch_size) throw DataError("train_supervised: dataset smaller than one batch");

  // Map arbitrary class ids onto dense head rows by sorted order.
  std::map<std::int32_t, std::int32_t> remap;
  for (auto y : labels) remap.emplace(y, 0);
  if (remap.size() < 2) throw DataError("degenerate supervision: need at least two classes");
  SupResult result;
  std::int32_t next_id = 0;
  for (auto& [original, dense] : remap) {
    dense = next_id++;
    result.class_ids.push_back(original);
  }
  std::vector<std::int32_t> dense_labels(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) dense_labels[i] = remap.at(labels[i]);
  std::size_t classes = remap.size();
  result.num_classes = classes;

  std::vector<std::size_t> dims;
  dims.push_back(data.cols);
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.emb_dim);

  RngStream init_rng(cfg.seed, stream_id(StreamPurpose::train_init));
  RngStream shuffle_rng(cfg.seed, stream_id(StreamPurpose::train_shuffle));
  SupModel model;
  model.backbone = init_mlp(dims, init_rng);
  {
    double stddev = std::sqrt(2.0 / static_cast<double>(cfg.emb_dim));
    model.head_weight = Matrix(classes, cfg.emb_dim);
    for (double& v : model.head_weight.data) v = stddev * init_rng.gaussian();
    model.head_bias.assign(classes, 0.0);
  }

  std::size_t steps_per_epoch = data.rows / cfg.batch_size;
  SgdConfig sgd = cfg.sgd;
  sgd.total_steps = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);

  MlpGrads backbone_velocity = zero_grads(model.backbone);
  Matrix head_w_velocity(classes, cfg.emb_dim);
  std::vector<double> head_b_velocity(classes, 0.0);

  Matrix batch(cfg.batch_size, data.cols);
  std::vector<std::int32_t> batch_labels(cfg.batch_size);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = shuffle_rng.permutation(data.rows);
    for (std::size_t block = 0; block < steps_per_epoch; ++block) {
      for (std::size_t r = 0; r < cfg.batch_size; ++r) {
        std::size_t src = order[block * cfg.batch_size + r];
        std::copy(data.row(src).begin(), data.row(src).end(), batch.row(r).begin());
        batch_labels[r] = dense_labels[src];
      }
      auto [loss, grads] = sup_loss_and_grad(model, batch, batch_labels);
      if (!std::isfinite(loss)) throw NumericError("diverged at step " + std::to_string(step));
      double lr = cosine_lr(step, sgd);
      sgd_step(model.backbone, grads.backbone, lr, sgd, backbone_velocity);
      if (!all_finite(grads.head_weight) || !all_finite(std::span<const double>(grads.head_bias))) {
        throw NumericError("diverged");
      }
      for (std::size_t i = 0; i < model.head_weight.data.size(); ++i) {
        double g = grads.head_weight.data[i] + sgd.weight_decay * model.head_weight.data[i];
        head_w_velocity.data[i] = sgd.momentum * head_w_velocity.data[i] + g;
        model.head_weight.data[i] -= lr * head_w_velocity.data[i];
      }
      for (std::size_t i = 0; i < model.head_bias.size(); ++i) {
        head_b_velocity[i] = sgd.momentum * head_b_velocity[i] + grads.head_bias[i];
        model.head_bias[i] -= lr * head_b_velocity[i];
      }
      result.trace.push_back({step, epoch, lr, loss});
      ++step;
    }
  }
  result.model = std::move(model);
  return result;
}

Matrix extract_logit_features(const SupModel& model, const Matrix& data) {
  return forward_logits(model, data);
}

Matrix extract_ssl_features(const MlpParams& params, const Matrix& data) {
  return forward(params, data);
}

}  // namespace fslab
