#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "ccad/eval.hpp"
#include "ccad/rng.hpp"

namespace ccad {

/**
 * @brief Labeled / unlabeled partition of the training images at one cycle.
 *
 * Both id lists are kept sorted ascending and together cover the universe.
 */
struct PoolState {
  std::vector<ImageId> labeled_ids;
  std::vector<ImageId> unlabeled_ids;
  int cycle_index = 0;
  int budget_per_cycle = 0;

  std::size_t size() const { return labeled_ids.size() + unlabeled_ids.size(); }
  bool is_labeled(ImageId id) const { return std::binary_search(labeled_ids.begin(), labeled_ids.end(), id); }
  bool is_unlabeled(ImageId id) const {
    return std::binary_search(unlabeled_ids.begin(), unlabeled_ids.end(), id);
  }

  /// Throws InvariantError if the two sets overlap or are unsorted.
  void check() const {
    if (!std::is_sorted(labeled_ids.begin(), labeled_ids.end()) ||
        !std::is_sorted(unlabeled_ids.begin(), unlabeled_ids.end()))
      throw InvariantError("pool id lists must be sorted");
    std::vector<ImageId> common;
    std::set_intersection(labeled_ids.begin(), labeled_ids.end(), unlabeled_ids.begin(), unlabeled_ids.end(),
                          std::back_inserter(common));
    if (!common.empty()) throw InvariantError("labeled and unlabeled pools overlap");
  }

  bool operator==(const PoolState&) const = default;
};

inline PoolState init_pool(std::vector<ImageId> universe, double initial_fraction, int budget_per_cycle,
                           std::uint64_t seed) {
  if (!(initial_fraction > 0 && initial_fraction < 1)) throw ConfigError("initial_fraction must be in (0,1)");
  if (budget_per_cycle <= 0) throw ConfigError("budget_per_cycle must be positive");
  std::sort(universe.begin(), universe.end());
  if (std::adjacent_find(universe.begin(), universe.end()) != universe.end())
    throw ConfigError("duplicate image ids in pool universe");

  const auto k0 = static_cast<std::size_t>(std::llround(initial_fraction * static_cast<double>(universe.size())));
  std::vector<ImageId> shuffled = universe;
  Rng rng(derive_seed(seed, {tag(Stream::kPool)}));
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  PoolState pool;
  pool.budget_per_cycle = budget_per_cycle;
  pool.labeled_ids.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k0));
  pool.unlabeled_ids.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(k0), shuffled.end());
  std::sort(pool.labeled_ids.begin(), pool.labeled_ids.end());
  std::sort(pool.unlabeled_ids.begin(), pool.unlabeled_ids.end());
  return pool;
}

/// Pool over ids 0..q-1.
inline PoolState init_pool(int q, double initial_fraction, int budget_per_cycle, std::uint64_t seed) {
  std::vector<ImageId> ids(static_cast<std::size_t>(std::max(q, 0)));
  std::iota(ids.begin(), ids.end(), ImageId{0});
  return init_pool(std::move(ids), initial_fraction, budget_per_cycle, seed);
}

/// Moves `selected` from unlabeled to labeled and advances the cycle. The input is not modified.
inline PoolState promote(const PoolState& pool, const std::vector<ImageId>& selected) {
  if (static_cast<int>(selected.size()) > pool.budget_per_cycle)
    throw InvariantError("selection exceeds budget_per_cycle");
  std::set<ImageId> seen;
  for (ImageId id : selected) {
    if (!seen.insert(id).second) throw InvariantError("duplicate id in selection: " + std::to_string(id));
    if (pool.is_labeled(id)) throw InvariantError("image already labeled: " + std::to_string(id));
    if (!pool.is_unlabeled(id)) throw InvariantError("unknown image id: " + std::to_string(id));
  }
  PoolState next = pool;
  next.labeled_ids.insert(next.labeled_ids.end(), selected.begin(), selected.end());
  std::sort(next.labeled_ids.begin(), next.labeled_ids.end());
  std::erase_if(next.unlabeled_ids, [&](ImageId id) { return seen.contains(id); });
  ++next.cycle_index;
  return next;
}

}  // namespace ccad
