#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace rtinfer {

using Rng = std::mt19937_64;

/// Independent stream for a tuple of indices, e.g. (seed, iteration, batch
/// element). Streams depend only on the tuple, never on scheduling, so
/// parallel work reproduces serial results exactly.
inline Rng make_stream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                       std::uint64_t c = 0) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(a), hi(a), lo(b), hi(b), lo(c), hi(c)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Number of successes when drawing `draws` items without replacement from a
/// population of `population` items of which `successes` are marked.
inline int sample_hypergeometric(Rng& rng, int draws, int successes, int population) {
  int found = 0;
  for (int i = 0; i < draws && successes > 0; ++i) {
    const int remaining = population - i;
    if (uniform01(rng) * remaining < successes) {
      ++found;
      --successes;
    }
  }
  return found;
}

/// Index drawn with probability proportional to `weights` (non-negative,
/// positive total).
inline std::size_t sample_weighted(Rng& rng, std::span<const long> weights, long total) {
  long target = std::uniform_int_distribution<long>(0, total - 1)(rng);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (target < weights[i]) return i;
    target -= weights[i];
  }
  return weights.size() - 1;
}

}  // namespace rtinfer
