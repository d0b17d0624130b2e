#include <cmath>
#include <limits>

#include <doctest.h>

#include "fslab/errors.hpp"
#include "fslab/mlp.hpp"
#include "fslab/rng.hpp"

using namespace fslab;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.gaussian();
  return m;
}

MlpParams random_net(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  RngStream rng(seed, stream_id(StreamPurpose::test, 100));
  return init_mlp(dims, rng);
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("identity single layer maps input to itself") {
  MlpParams p;
  p.layer_dims = {3, 3};
  Matrix w(3, 3);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
  p.weights.push_back(w);
  p.biases.emplace_back(3, 0.0);

  RngStream rng(1, stream_id(StreamPurpose::test, 101));
  Matrix x = random_matrix(4, 3, rng);
  Matrix y = forward(p, x);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("zero net maps everything to zero") {
  MlpParams p;
  p.layer_dims = {3, 5, 2};
  p.weights.emplace_back(5, 3);
  p.weights.emplace_back(2, 5);
  p.biases.emplace_back(5, 0.0);
  p.biases.emplace_back(2, 0.0);
  RngStream rng(2, stream_id(StreamPurpose::test, 102));
  Matrix y = forward(p, random_matrix(6, 3, rng));
  for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("forward shape contract on a random 2-layer net") {
  auto p = random_net({3, 7, 4}, 3);
  RngStream rng(3, stream_id(StreamPurpose::test, 103));
  Matrix y = forward(p, random_matrix(4, 3, rng));
  CHECK(y.rows == 4);
  CHECK(y.cols == 4);
}

TEST_CASE("forward rejects wrong input width") {
  auto p = random_net({3, 4}, 4);
  Matrix x(2, 5);
  CHECK_THROWS_AS(forward(p, x), DataError);
}

TEST_CASE("backward with zero upstream gradient is zero") {
  auto p = random_net({3, 6, 2}, 5);
  RngStream rng(5, stream_id(StreamPurpose::test, 104));
  ForwardCache cache;
  Matrix y = forward(p, random_matrix(4, 3, rng), cache);
  Matrix zero(y.rows, y.cols);
  MlpGrads g = backward(p, cache, zero);
  for (const auto& w : g.weights) {
    for (double v : w.data) CHECK(v == 0.0);
  }
  for (const auto& b : g.biases) {
    for (double v : b) CHECK(v == 0.0);
  }
}

TEST_CASE("single linear layer gradient is the summed outer product") {
  // y = Wx, loss = sum(y)  =>  d/dW = sum over batch of x^T
  auto p = random_net({3, 2}, 6);
  RngStream rng(6, stream_id(StreamPurpose::test, 105));
  Matrix x = random_matrix(5, 3, rng);
  ForwardCache cache;
  Matrix y = forward(p, x, cache);
  Matrix ones(y.rows, y.cols, 1.0);
  MlpGrads g = backward(p, cache, ones);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      double expected = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) expected += x(i, c);
      CHECK(g.weights[0](r, c) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward matches finite differences on a random 3-layer net") {
  auto p = random_net({4, 6, 5, 3}, 7);  // 4*6+6*5+5*3 + 14 = 83 params
  RngStream rng(7, stream_id(StreamPurpose::test, 106));
  Matrix x = random_matrix(5, 4, rng);
  Matrix target = random_matrix(5, 3, rng);

  auto loss_and_grad = [&](const MlpParams& params) {
    ForwardCache cache;
    Matrix y = forward(params, x, cache);
    Matrix diff(y.rows, y.cols);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      double d = y.data[i] - target.data[i];
      loss += 0.5 * d * d;
      diff.data[i] = d;
    }
    return std::make_pair(loss, backward(params, cache, diff));
  };
  CHECK(gradient_check(p, loss_and_grad) < 1e-6);
}

TEST_CASE("gradient_check on linear least squares is tight") {
  auto p = random_net({3, 2}, 8);
  RngStream rng(8, stream_id(StreamPurpose::test, 107));
  Matrix x = random_matrix(6, 3, rng);
  Matrix target = random_matrix(6, 2, rng);
  auto loss_and_grad = [&](const MlpParams& params) {
    ForwardCache cache;
    Matrix y = forward(params, x, cache);
    Matrix diff(y.rows, y.cols);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      double d = y.data[i] - target.data[i];
      loss += 0.5 * d * d;
      diff.data[i] = d;
    }
    return std::make_pair(loss, backward(params, cache, diff));
  };
  CHECK(gradient_check(p, loss_and_grad) < 1e-7);
}

TEST_CASE("gradient_check on an empty net is vacuously zero") {
  MlpParams p;
  auto loss_and_grad = [](const MlpParams&) { return std::make_pair(0.0, MlpGrads{}); };
  CHECK(gradient_check(p, loss_and_grad) == 0.0);
}

TEST_CASE("sgd_step with lr 0 is the bit-for-bit identity") {
  auto p = random_net({3, 4, 2}, 9);
  MlpParams before = p;
  MlpGrads grads = zero_grads(p);
  for (auto& w : grads.weights) {
    for (double& v : w.data) v = 1.5;
  }
  MlpGrads velocity = zero_grads(p);
  SgdConfig cfg;
  sgd_step(p, grads, 0.0, cfg, velocity);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (std::size_t i = 0; i < p.weights[l].data.size(); ++i) {
      CHECK(p.weights[l].data[i] == before.weights[l].data[i]);
    }
  }
}

TEST_CASE("sgd_step plain arithmetic") {
  // theta = 1, grad = 2, lr = 0.1, no momentum/decay -> 0.8
  MlpParams p;
  p.layer_dims = {1, 1};
  p.weights.emplace_back(1, 1, 1.0);
  p.biases.emplace_back(1, 0.0);
  MlpGrads g = zero_grads(p);
  g.weights[0](0, 0) = 2.0;
  MlpGrads velocity = zero_grads(p);
  SgdConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  sgd_step(p, g, 0.1, cfg, velocity);
  CHECK(p.weights[0](0, 0) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("sgd_step decay-only shrinks weights by (1 - lr*lambda)") {
  MlpParams p;
  p.layer_dims = {1, 1};
  p.weights.emplace_back(1, 1, 2.0);
  p.biases.emplace_back(1, 0.0);
  MlpGrads g = zero_grads(p);
  MlpGrads velocity = zero_grads(p);
  SgdConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.5;
  sgd_step(p, g, 0.1, cfg, velocity);
  CHECK(p.weights[0](0, 0) == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-15));
}

TEST_CASE("sgd_step rejects non-finite gradients") {
  auto p = random_net({2, 2}, 10);
  MlpGrads g = zero_grads(p);
  g.weights[0](0, 0) = std::numeric_limits<double>::infinity();
  MlpGrads velocity = zero_grads(p);
  SgdConfig cfg;
  CHECK_THROWS_WITH_AS(sgd_step(p, g, 0.1, cfg, velocity), "diverged", NumericError);
}

TEST_CASE("cosine_lr endpoints and midpoint") {
  SgdConfig cfg;
  cfg.base_lr = 0.03;
  cfg.total_steps = 100;
  CHECK(cosine_lr(0, cfg) == doctest::Approx(0.03).epsilon(1e-15));
  CHECK(cosine_lr(100, cfg) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_lr(50, cfg) == doctest::Approx(0.015).epsilon(1e-12));
}

TEST_CASE("cosine_lr is monotone non-increasing") {
  SgdConfig cfg;
  cfg.base_lr = 0.03;
  cfg.total_steps = 37;
  double previous = cosine_lr(0, cfg);
  for (std::size_t s = 1; s <= 37; ++s) {
    double lr = cosine_lr(s, cfg);
    CHECK(lr <= previous);
    previous = lr;
  }
}

TEST_CASE("cosine_lr rejects out-of-range steps") {
  SgdConfig cfg;
  cfg.total_steps = 10;
  CHECK_THROWS_AS(cosine_lr(11, cfg), DataError);
}

TEST_CASE("init_mlp is deterministic per seed") {
  auto a = random_net({5, 8, 3}, 42);
  auto b = random_net({5, 8, 3}, 42);
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    for (std::size_t i = 0; i < a.weights[l].data.size(); ++i) {
      CHECK(a.weights[l].data[i] == b.weights[l].data[i]);
    }
  }
}

}  // TEST_SUITE
