#pragma once

#include <cstdint>
#include <vector>

namespace fslab {

// Purpose tags baked into the high bits of a stream id, so different pipeline
// stages sharing one user-facing seed never draw from the same stream.
enum class StreamPurpose : std::uint64_t {
  synth = 1,
  train_init = 2,
  train_shuffle = 3,
  train_augment = 4,
  setting_budget = 5,
  eval_episode = 6,
  test = 7,
  subsample = 8,
};

constexpr std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t index = 0) {
  return (static_cast<std::uint64_t>(purpose) << 48) | index;
}

// Counter-based generator (SplitMix64 over a derived state). A given
// (master_seed, stream_id) pair yields the same sequence on every run,
// independent of how many other streams exist or in what order they draw.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream);

  std::uint64_t next_u64();
  // Unbiased draw in [0, n), n >= 1.
  std::uint64_t below(std::uint64_t n);
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller.
  double gaussian();

  std::vector<std::size_t> permutation(std::size_t n);
  // k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> choose(std::size_t k, std::size_t n);

 private:
  std::uint64_t state_;
};

}  // namespace fslab
