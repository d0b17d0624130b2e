#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace fslab {

// Dense row-major matrix of 64-bit floats. All numerics in the project run in
// double precision so gradient checks have headroom.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
};

// Limits worker threads used by the parallel kernels and the episode loop.
// 0 restores the hardware default. Results never depend on the thread count.
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs fn(i) for i in [0, n). Each index is processed exactly once by one
// worker; fn must not touch state shared across indices.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// A * B            (m x k) * (k x n) -> m x n
Matrix matmul(const Matrix& a, const Matrix& b);
// A * B^T          (m x k) * (n x k) -> m x n
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// A^T * B          (m x k) * (m x n) -> k x n
Matrix matmul_tn(const Matrix& a, const Matrix& b);

double row_l2_norm(std::span<const double> row);

// Each nonzero row scaled to unit Euclidean norm; zero rows pass through
// unchanged so degenerate embeddings never poison a downstream run.
Matrix l2_normalize_rows(const Matrix& m);
// Same, also reporting each row's original norm (0 for zero rows).
Matrix l2_normalize_rows(const Matrix& m, std::vector<double>& norms_out);

// log(sum_i exp(v_i)) via max-shift; throws on empty input.
double log_sum_exp(std::span<const double> v);

bool all_finite(const Matrix& m);
bool all_finite(std::span<const double> v);

}  // namespace fslab
