#pragma once

#include <cstdint>
#include <vector>

#include "fslab/matrix.hpp"
#include "fslab/mlp.hpp"

namespace fslab {

// Backbone plus a linear classification head over the base classes. The
// pre-softmax logits double as the feature embedding.
struct SupModel {
  MlpParams backbone;
  Matrix head_weight;             // num_classes x emb_dim
  std::vector<double> head_bias;  // num_classes
};

struct SupGrads {
  MlpGrads backbone;
  Matrix head_weight;
  std::vector<double> head_bias;
};

struct SupConfig {
  std::vector<std::size_t> hidden_dims{128, 128};
  std::size_t emb_dim = 128;
  std::size_t batch_size = 256;
  std::size_t epochs = 15;
  SgdConfig sgd;
  std::uint64_t seed = 0;
};

struct SupResult {
  SupModel model;
  std::vector<TraceRow> trace;
  std::size_t num_classes = 0;
  std::vector<std::int32_t> class_ids;  // sorted original labels, row c of the head scores class_ids[c]
};

// Mean negative log-softmax of the true class plus its exact gradient.
// labels are dense ids in [0, C).
std::pair<double, Matrix> cross_entropy(const Matrix& logits, std::span<const std::int32_t> labels);

// Loss and full parameter gradient of head(backbone(x)) under cross-entropy.
std::pair<double, SupGrads> sup_loss_and_grad(const SupModel& model, const Matrix& batch,
                                              std::span<const std::int32_t> labels);

Matrix forward_logits(const SupModel& model, const Matrix& batch);

// Mini-batch SGD with the cosine schedule on cross-entropy. labels may be any
// integer ids; they are mapped onto head rows by sorted order.
SupResult train_supervised(const Matrix& data, std::span<const std::int32_t> labels,
                           const SupConfig& cfg);

// The logit-layer embedding: head(backbone(x)), one column per base class.
Matrix extract_logit_features(const SupModel& model, const Matrix& data);

// Backbone-only embedding (the encoder output for self-supervised models,
// the pre-head layer for supervised ones).
Matrix extract_ssl_features(const MlpParams& params, const Matrix& data);

}  // namespace fslab
