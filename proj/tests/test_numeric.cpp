#include <cmath>

#include <doctest.h>

#include "fslab/errors.hpp"
#include "fslab/matrix.hpp"
#include "fslab/rng.hpp"

using namespace fslab;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = scale * rng.gaussian();
  return m;
}

}  // namespace

TEST_SUITE("numeric") {

TEST_CASE("l2_normalize_rows on the 3-4-5 triangle") {
  Matrix m(1, 2);
  m(0, 0) = 3.0;
  m(0, 1) = 4.0;
  Matrix n = l2_normalize_rows(m);
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("l2_normalize_rows passes zero rows through") {
  Matrix m(2, 2);
  m(1, 0) = 5.0;
  Matrix n = l2_normalize_rows(m);
  CHECK(n(0, 0) == 0.0);
  CHECK(n(0, 1) == 0.0);
  CHECK(n(1, 0) == 1.0);
}

TEST_CASE("l2_normalize_rows single entry") {
  Matrix m(1, 1);
  m(0, 0) = 5.0;
  CHECK(l2_normalize_rows(m)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("l2_normalize_rows survives entries that would underflow squared") {
  Matrix m(1, 3, 1e-200);
  Matrix n = l2_normalize_rows(m);
  CHECK(row_l2_norm(n.row(0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("l2_normalize_rows is idempotent") {
  RngStream rng(11, stream_id(StreamPurpose::test, 0));
  Matrix m = random_matrix(7, 5, rng, 3.0);
  Matrix once = l2_normalize_rows(m);
  Matrix twice = l2_normalize_rows(once);
  for (std::size_t i = 0; i < once.data.size(); ++i) {
    CHECK(std::abs(once.data[i] - twice.data[i]) < 1e-12);
  }
}

TEST_CASE("log_sum_exp equal logits") {
  std::vector<double> v(4, 0.0);
  CHECK(log_sum_exp(v) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("log_sum_exp max-shift keeps huge inputs finite") {
  std::vector<double> v{1000.0, 1000.0};
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("log_sum_exp singleton identity") {
  for (double x : {-3.5, 0.0, 42.0, 9999.0}) {
    std::vector<double> v{x};
    CHECK(log_sum_exp(v) == doctest::Approx(x).epsilon(1e-15));
  }
}

TEST_CASE("log_sum_exp rejects empty input") {
  std::vector<double> v;
  CHECK_THROWS_WITH_AS(log_sum_exp(v), "empty reduction", DataError);
}

TEST_CASE("log_sum_exp shift equivariance") {
  RngStream rng(12, stream_id(StreamPurpose::test, 1));
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 1 + rng.below(12);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-20.0, 20.0);
    double c = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += c;
    CHECK(std::abs(log_sum_exp(shifted) - (log_sum_exp(v) + c)) < 1e-10);
  }
}

TEST_CASE("rng determinism per (seed, stream)") {
  RngStream a(99, 7);
  RngStream b(99, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng streams with different ids differ") {
  RngStream a(99, 7);
  RngStream b(99, 8);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += (a.next_u64() == b.next_u64());
  CHECK(same == 0);
}

TEST_CASE("choose k=n is a permutation") {
  RngStream rng(5, stream_id(StreamPurpose::test, 2));
  auto picks = rng.choose(6, 6);
  std::vector<bool> hit(6, false);
  for (auto p : picks) {
    REQUIRE(p < 6);
    CHECK(!hit[p]);
    hit[p] = true;
  }
}

TEST_CASE("choose rejects k > n") {
  RngStream rng(5, stream_id(StreamPurpose::test, 3));
  CHECK_THROWS_WITH_AS(rng.choose(3, 2), "sample larger than population", DataError);
}

TEST_CASE("choose returns distinct indices") {
  RngStream rng(6, stream_id(StreamPurpose::test, 4));
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = 1 + rng.below(40);
    std::size_t k = rng.below(n + 1);
    auto picks = rng.choose(k, n);
    REQUIRE(picks.size() == k);
    std::vector<bool> hit(n, false);
    for (auto p : picks) {
      REQUIRE(p < n);
      CHECK(!hit[p]);
      hit[p] = true;
    }
  }
}

TEST_CASE("gaussian draws have near-zero mean") {
  RngStream rng(2024, stream_id(StreamPurpose::test, 5));
  const std::size_t n = 100000;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += rng.gaussian();
  double mean = sum / static_cast<double>(n);
  CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("permutation covers 0..n-1") {
  RngStream rng(3, stream_id(StreamPurpose::test, 6));
  auto perm = rng.permutation(17);
  std::vector<bool> hit(17, false);
  for (auto p : perm) hit[p] = true;
  for (bool h : hit) CHECK(h);
}

TEST_CASE("matmul agrees with a hand computation") {
  Matrix a(2, 3);
  Matrix b(3, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    a.data[i] = static_cast<double>(i + 1);
    b.data[i] = static_cast<double>(6 - i);
  }
  Matrix c = matmul(a, b);
  // [[1,2,3],[4,5,6]] * [[6,5],[4,3],[2,1]] = [[20,14],[56,41]]
  CHECK(c(0, 0) == 20.0);
  CHECK(c(0, 1) == 14.0);
  CHECK(c(1, 0) == 56.0);
  CHECK(c(1, 1) == 41.0);
}

TEST_CASE("matmul variants are transpose-consistent") {
  RngStream rng(8, stream_id(StreamPurpose::test, 7));
  Matrix a = random_matrix(4, 6, rng);
  Matrix b = random_matrix(5, 6, rng);
  Matrix direct = matmul_nt(a, b);
  Matrix bt(6, 5);
  for (std::size_t i = 0; i < b.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) bt(j, i) = b(i, j);
  }
  Matrix via_plain = matmul(a, bt);
  REQUIRE(direct.same_shape(via_plain));
  for (std::size_t i = 0; i < direct.data.size(); ++i) {
    CHECK(direct.data[i] == doctest::Approx(via_plain.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  Matrix a(2, 3);
  Matrix b(2, 2);
  CHECK_THROWS_AS(matmul(a, b), DataError);
}

TEST_CASE("parallel kernels match the single-thread result bit for bit") {
  RngStream rng(21, stream_id(StreamPurpose::test, 8));
  Matrix a = random_matrix(300, 80, rng);
  Matrix b = random_matrix(90, 80, rng);
  set_max_threads(1);
  Matrix serial = matmul_nt(a, b);
  set_max_threads(4);
  Matrix parallel = matmul_nt(a, b);
  set_max_threads(0);
  REQUIRE(serial.data.size() == parallel.data.size());
  for (std::size_t i = 0; i < serial.data.size(); ++i) CHECK(serial.data[i] == parallel.data[i]);
}

}  // TEST_SUITE
