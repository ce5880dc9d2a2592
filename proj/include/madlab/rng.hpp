#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace madlab {

using Rng = std::mt19937_64;

// Independent random streams used by the pipeline. Every stream is derived
// from (run seed, stream, index) so any epoch can be replayed in isolation.
enum class Stream : std::uint64_t {
  Generator = 1,
  SplitAssignment,
  PretextInit,
  MadHeadInit,
  PretrainShuffle,
  Augment,
  KMeans,
  FinetuneShuffle,
  UntrainedInit,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ index);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng{derive_seed(seed, stream, index)};
}

// Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  return idx;
}

}  // namespace madlab
