#pragma once

#include <cstdint>
#include <random>

namespace coalab {

using Rng = std::mt19937_64;

/// Independent stream tags. A stream is addressed by (campaign seed, tag, index)
/// so results never depend on the order in which workers pick up samples.
enum class Stream : std::uint64_t {
  key = 1,
  sample = 2,
  rotation = 3,
  microbench = 4,
  trial = 5,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace coalab
