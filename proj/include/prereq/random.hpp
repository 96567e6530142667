#pragma once

#include <cstdint>
#include <random>

namespace prereq {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream tag (splitmix64 finalizer) so that
/// independent consumers of one run seed get decorrelated generators.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace stream {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kLabelEdges = 3;
inline constexpr std::uint64_t kNegatives = 4;
inline constexpr std::uint64_t kNoise = 5;
inline constexpr std::uint64_t kTargets = 6;
}  // namespace stream

}  // namespace prereq
