#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ccad {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and a list of tags.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(root);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
  return h;
}

// Stream tags, one per consumer of randomness.
enum class Stream : std::uint64_t {
  kDataset = 1,
  kSplit = 2,
  kPool = 3,
  kBackboneInit = 4,
  kMainHeadInit = 5,
  kCommitteeInit = 6,
  kShuffleLabeled = 7,
  kShuffleUnlabeled = 8,
  kRandomSelect = 9,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace ccad
