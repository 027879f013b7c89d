#pragma once

#include <cstdint>
#include <random>

namespace dualglob {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Child seed for item `index` of a stream. Serial and parallel loops that
// derive per-item seeds this way draw identical numbers.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ index);
}

// Stream tags keep unrelated consumers of one experiment seed apart.
enum class Stream : std::uint64_t {
  folds = 0x11,
  init = 0x22,
  shuffle = 0x33,
  augment = 0x44,
  probe = 0x55,
  synth = 0x66,
};

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
  return derive_seed(seed, static_cast<std::uint64_t>(stream) << 40);
}

}  // namespace dualglob
