#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fslab/errors.hpp"
#include "fslab/rng.hpp"
#include "fslab/supervised.hpp"

using namespace fslab;

namespace {

// Two well-separated clusters with labels 0/1.
std::pair<Matrix, std::vector<std::int32_t>> two_blobs(std::size_t per_class, std::size_t dim,
                                                       std::uint64_t seed) {
  RngStream rng(seed, stream_id(StreamPurpose::test, 300));
  Matrix data(2 * per_class, dim);
  std::vector<std::int32_t> labels(2 * per_class);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    double center = (i < per_class) ? -4.0 : 4.0;
    for (std::size_t j = 0; j < dim; ++j) data(i, j) = center + rng.gaussian();
    labels[i] = (i < per_class) ? 0 : 1;
  }
  return {std::move(data), std::move(labels)};
}

SupModel random_model(std::size_t in, std::size_t emb, std::size_t classes, std::uint64_t seed) {
  RngStream rng(seed, stream_id(StreamPurpose::test, 301));
  SupModel model;
  model.backbone = init_mlp({in, 6, emb}, rng);
  model.head_weight = Matrix(classes, emb);
  for (double& v : model.head_weight.data) v = rng.gaussian();
  model.head_bias.assign(classes, 0.0);
  for (double& v : model.head_bias) v = 0.1 * rng.gaussian();
  return model;
}

}  // namespace

TEST_SUITE("supervised") {

TEST_CASE("cross_entropy on uniform logits is ln(C)") {
  Matrix logits(3, 4);
  std::vector<std::int32_t> labels{0, 2, 3};
  auto [loss, grad] = cross_entropy(logits, labels);
  CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(grad.rows == 3);
}

TEST_CASE("cross_entropy vanishes as the correct-class margin grows") {
  std::vector<std::int32_t> labels{1};
  double previous = 100.0;
  for (double margin : {1.0, 5.0, 20.0, 100.0}) {
    Matrix logits(1, 3);
    logits(0, 1) = margin;
    auto [loss, grad] = cross_entropy(logits, labels);
    CHECK(loss < previous);
    previous = loss;
  }
  CHECK(previous < 1e-40);
}

TEST_CASE("cross_entropy gradient matches finite differences") {
  RngStream rng(31, stream_id(StreamPurpose::test, 302));
  Matrix logits(4, 5);
  for (double& v : logits.data) v = rng.gaussian();
  std::vector<std::int32_t> labels{3, 0, 4, 2};
  auto [loss, grad] = cross_entropy(logits, labels);
  (void)loss;
  double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    double original = logits.data[i];
    logits.data[i] = original + h;
    double up = cross_entropy(logits, labels).first;
    logits.data[i] = original - h;
    double down = cross_entropy(logits, labels).first;
    logits.data[i] = original;
    double fd = (up - down) / (2.0 * h);
    double rel = std::abs(grad.data[i] - fd) / std::max(1e-8, std::abs(grad.data[i]) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("cross_entropy rejects out-of-range labels") {
  Matrix logits(1, 3);
  std::vector<std::int32_t> labels{3};
  CHECK_THROWS_AS(cross_entropy(logits, labels), DataError);
  labels[0] = -1;
  CHECK_THROWS_AS(cross_entropy(logits, labels), DataError);
}

TEST_CASE("cross_entropy is shift invariant per row") {
  RngStream rng(32, stream_id(StreamPurpose::test, 303));
  Matrix logits(3, 6);
  for (double& v : logits.data) v = rng.uniform(-5.0, 5.0);
  std::vector<std::int32_t> labels{5, 1, 0};
  double base = cross_entropy(logits, labels).first;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    for (std::size_t j = 0; j < logits.cols; ++j) logits(i, j) += 7.25;
  }
  CHECK(std::abs(cross_entropy(logits, labels).first - base) < 1e-10);
}

TEST_CASE("sup_loss_and_grad matches finite differences end to end") {
  RngStream rng(33, stream_id(StreamPurpose::test, 304));
  SupModel model = random_model(3, 4, 3, 33);
  Matrix x(5, 3);
  for (double& v : x.data) v = rng.gaussian();
  std::vector<std::int32_t> labels{0, 1, 2, 1, 0};

  auto [loss, grads] = sup_loss_and_grad(model, x, labels);
  (void)loss;
  auto loss_of = [&] { return sup_loss_and_grad(model, x, labels).first; };

  std::vector<double*> params;
  std::vector<const double*> analytic;
  for (double* p : flatten(model.backbone)) params.push_back(p);
  for (const double* g : flatten(grads.backbone)) analytic.push_back(g);
  for (double& v : model.head_weight.data) params.push_back(&v);
  for (const double& g : grads.head_weight.data) analytic.push_back(&g);
  for (double& v : model.head_bias) params.push_back(&v);
  for (const double& g : grads.head_bias) analytic.push_back(&g);

  CHECK(fd_max_rel_error(params, analytic, loss_of) < 1e-5);
}

TEST_CASE("train_supervised with zero epochs returns the initialization") {
  auto [data, labels] = two_blobs(10, 4, 40);
  SupConfig cfg;
  cfg.hidden_dims = {6};
  cfg.emb_dim = 4;
  cfg.batch_size = 5;
  cfg.epochs = 0;
  cfg.seed = 9;
  auto result = train_supervised(data, labels, cfg);
  CHECK(result.trace.empty());
  CHECK(result.num_classes == 2);
  RngStream init_rng(9, stream_id(StreamPurpose::train_init));
  MlpParams expected = init_mlp({4, 6, 4}, init_rng);
  for (std::size_t l = 0; l < expected.num_layers(); ++l) {
    for (std::size_t i = 0; i < expected.weights[l].data.size(); ++i) {
      CHECK(result.model.backbone.weights[l].data[i] == expected.weights[l].data[i]);
    }
  }
}

TEST_CASE("train_supervised separates well-separated classes") {
  auto [data, labels] = two_blobs(40, 6, 41);
  SupConfig cfg;
  cfg.hidden_dims = {16};
  cfg.emb_dim = 8;
  cfg.batch_size = 16;
  cfg.epochs = 20;
  cfg.seed = 10;
  auto result = train_supervised(data, labels, cfg);
  Matrix logits = forward_logits(result.model, data);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    std::size_t best = logits(i, 0) >= logits(i, 1) ? 0 : 1;
    correct += (static_cast<std::int32_t>(best) == labels[i]);
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(data.rows) > 0.95);
}

TEST_CASE("train_supervised is deterministic per seed") {
  auto [data, labels] = two_blobs(20, 4, 42);
  SupConfig cfg;
  cfg.hidden_dims = {8};
  cfg.emb_dim = 4;
  cfg.batch_size = 10;
  cfg.epochs = 4;
  cfg.seed = 11;
  auto a = train_supervised(data, labels, cfg);
  auto b = train_supervised(data, labels, cfg);
  for (std::size_t i = 0; i < a.model.head_weight.data.size(); ++i) {
    CHECK(a.model.head_weight.data[i] == b.model.head_weight.data[i]);
  }
  for (std::size_t l = 0; l < a.model.backbone.num_layers(); ++l) {
    for (std::size_t i = 0; i < a.model.backbone.weights[l].data.size(); ++i) {
      CHECK(a.model.backbone.weights[l].data[i] == b.model.backbone.weights[l].data[i]);
    }
  }
}

TEST_CASE("train_supervised rejects single-class data") {
  Matrix data(10, 3);
  std::vector<std::int32_t> labels(10, 4);
  SupConfig cfg;
  cfg.batch_size = 5;
  CHECK_THROWS_AS(train_supervised(data, labels, cfg), DataError);
}

TEST_CASE("logit features have one column per class") {
  SupModel model = random_model(5, 7, 64, 50);
  RngStream rng(50, stream_id(StreamPurpose::test, 305));
  Matrix x(3, 5);
  for (double& v : x.data) v = rng.gaussian();
  Matrix features = extract_logit_features(model, x);
  CHECK(features.rows == 3);
  CHECK(features.cols == 64);
}

TEST_CASE("zero model produces zero features") {
  SupModel model;
  model.backbone.layer_dims = {3, 4};
  model.backbone.weights.emplace_back(4, 3);
  model.backbone.biases.emplace_back(4, 0.0);
  model.head_weight = Matrix(2, 4);
  model.head_bias.assign(2, 0.0);
  Matrix x(5, 3, 1.0);
  Matrix features = extract_logit_features(model, x);
  for (double v : features.data) CHECK(v == 0.0);
}

TEST_CASE("single input row yields a single feature row") {
  SupModel model = random_model(4, 3, 6, 51);
  Matrix x(1, 4, 0.5);
  CHECK(extract_logit_features(model, x).rows == 1);
}

TEST_CASE("logit features have no batch coupling") {
  SupModel model = random_model(4, 5, 3, 52);
  RngStream rng(52, stream_id(StreamPurpose::test, 306));
  Matrix batch(6, 4);
  for (double& v : batch.data) v = rng.gaussian();
  Matrix whole = extract_logit_features(model, batch);
  for (std::size_t i = 0; i < batch.rows; ++i) {
    Matrix single(1, 4);
    std::copy(batch.row(i).begin(), batch.row(i).end(), single.row(0).begin());
    Matrix one = extract_logit_features(model, single);
    for (std::size_t j = 0; j < one.cols; ++j) {
      CHECK(one(0, j) == whole(i, j));
    }
  }
}

TEST_CASE("extract_ssl_features through an identity layer returns the input") {
  MlpParams p;
  p.layer_dims = {3, 3};
  Matrix w(3, 3);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
  p.weights.push_back(w);
  p.biases.emplace_back(3, 0.0);
  Matrix x(2, 3);
  x(0, 0) = 1.5;
  x(1, 2) = -2.5;
  Matrix f = extract_ssl_features(p, x);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(f.data[i] == x.data[i]);
}

TEST_CASE("extract_ssl_features at the configured width") {
  RngStream rng(53, stream_id(StreamPurpose::test, 307));
  MlpParams p = init_mlp({6, 16, 128}, rng);
  Matrix x(4, 6);
  for (double& v : x.data) v = rng.gaussian();
  Matrix f = extract_ssl_features(p, x);
  CHECK(f.rows == 4);
  CHECK(f.cols == 128);
  Matrix again = extract_ssl_features(p, x);
  for (std::size_t i = 0; i < f.data.size(); ++i) CHECK(f.data[i] == again.data[i]);
}

}  // TEST_SUITE
