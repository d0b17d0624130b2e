#include "fslab/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "fslab/errors.hpp"

namespace fslab {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream)
    : state_(mix64(mix64(master_seed + kGolden) ^ mix64(stream + 0x5851f42d4c957f2dULL))) {}

std::uint64_t RngStream::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw DataError("below: n must be positive");
  // Lemire's multiply-shift with rejection of the biased low range.
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto lo = static_cast<std::uint64_t>(m);
  if (lo < n) {
    std::uint64_t threshold = (0ULL - n) % n;
    while (lo < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * n;
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::gaussian() {
  double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::vector<std::size_t> RngStream::choose(std::size_t k, std::size_t n) {
  if (k > n) throw DataError("sample larger than population");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace fslab
