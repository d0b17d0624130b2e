#include "fslab/matrix.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <string>
#include <thread>

#include "fslab/errors.hpp"

namespace fslab {

namespace {

std::atomic<unsigned> g_max_threads{0};
thread_local bool t_in_parallel_region = false;

unsigned hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

void check_mul(std::size_t inner_a, std::size_t inner_b, const char* op) {
  if (inner_a != inner_b) {
    throw DataError(std::string(op) + ": inner dimensions differ (" + std::to_string(inner_a) +
                    " vs " + std::to_string(inner_b) + ")");
  }
}

// Serial unless the per-call work amortizes thread startup. Row i of the
// output is written by exactly one worker, so results match the serial path
// bit for bit whatever the thread count.
void for_each_row(std::size_t n, std::size_t flops_per_row, const std::function<void(std::size_t)>& fn) {
  if (flops_per_row * n < 400000) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  parallel_for(n, fn);
}

}  // namespace

void set_max_threads(unsigned n) { g_max_threads.store(n); }

unsigned max_threads() {
  unsigned n = g_max_threads.load();
  return n == 0 ? hardware_threads() : n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  unsigned workers = max_threads();
  if (workers <= 1 || n < 2 || t_in_parallel_region) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (workers > n) workers = static_cast<unsigned>(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    t_in_parallel_region = true;
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        break;
      }
    }
    t_in_parallel_region = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_mul(a.cols, b.rows, "matmul");
  Matrix out(a.rows, b.cols);
  for_each_row(a.rows, 2 * a.cols * b.cols, [&](std::size_t i) {
    const double* arow = a.data.data() + i * a.cols;
    double* orow = out.data.data() + i * out.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  });
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_mul(a.cols, b.cols, "matmul_nt");
  Matrix out(a.rows, b.rows);
  for_each_row(a.rows, 2 * a.cols * b.rows, [&](std::size_t i) {
    const double* arow = a.data.data() + i * a.cols;
    double* orow = out.data.data() + i * out.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.data.data() + j * b.cols;
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      orow[j] = acc;
    }
  });
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_mul(a.rows, b.rows, "matmul_tn");
  Matrix out(a.cols, b.cols);
  for_each_row(a.cols, 2 * a.rows * b.cols, [&](std::size_t i) {
    double* orow = out.data.data() + i * out.cols;
    for (std::size_t k = 0; k < a.rows; ++k) {
      double aki = a.data[k * a.cols + i];
      if (aki == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  });
  return out;
}

double row_l2_norm(std::span<const double> row) {
  // Scale by the max entry so squares of tiny rows cannot underflow to zero.
  double peak = 0.0;
  for (double v : row) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0.0;
  double acc = 0.0;
  for (double v : row) {
    double s = v / peak;
    acc += s * s;
  }
  return peak * std::sqrt(acc);
}

Matrix l2_normalize_rows(const Matrix& m) {
  std::vector<double> norms;
  return l2_normalize_rows(m, norms);
}

Matrix l2_normalize_rows(const Matrix& m, std::vector<double>& norms_out) {
  Matrix out = m;
  norms_out.assign(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double norm = row_l2_norm(m.row(i));
    norms_out[i] = norm;
    if (norm == 0.0) continue;  // zero rows pass through
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) /= norm;
  }
  return out;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw DataError("empty reduction");
  double peak = v[0];
  for (double x : v) peak = std::max(peak, x);
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - peak);
  return peak + std::log(acc);
}

bool all_finite(const Matrix& m) { return all_finite(std::span<const double>(m.data)); }

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace fslab
