#pragma once

#include <cstdint>
#include <initializer_list>

namespace pbacc {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for a path below `parent` (experiment -> round -> node, ...).
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(parent);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream tags used with derive_seed.
inline constexpr std::uint64_t kSeedDataset = 1;
inline constexpr std::uint64_t kSeedModel = 2;
inline constexpr std::uint64_t kSeedNoise = 3;
inline constexpr std::uint64_t kSeedNetwork = 4;
inline constexpr std::uint64_t kSeedEval = 5;

}  // namespace pbacc
