#pragma once

#include <cstdint>
#include <random>

namespace mlfdr {

using Rng = std::mt19937_64;

// SplitMix64 finalizer, used to turn (root seed, stream counter) pairs into
// well-separated generator seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ splitmix64(stream + 0x5851F42D4C957F2DULL));
}

inline Rng make_stream(std::uint64_t root, std::uint64_t stream) { return Rng(derive_seed(root, stream)); }

}  // namespace mlfdr
