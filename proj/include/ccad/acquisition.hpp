#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ccad/detector.hpp"
#include "ccad/losses.hpp"
#include "ccad/pool.hpp"

namespace ccad {

enum class Strategy { kCommittee, kRandom, kEntropy, kCoreSet };

inline Strategy parse_strategy(const std::string& s) {
  if (s == "committee") return Strategy::kCommittee;
  if (s == "random") return Strategy::kRandom;
  if (s == "entropy") return Strategy::kEntropy;
  if (s == "coreset") return Strategy::kCoreSet;
  throw ConfigError("unknown strategy: " + s);
}

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kCommittee: return "committee";
    case Strategy::kRandom: return "random";
    case Strategy::kEntropy: return "entropy";
    case Strategy::kCoreSet: return "coreset";
  }
  return "unknown";
}

struct InstanceScore {
  std::size_t anchor_index = 0;
  double score = 0;
  bool operator==(const InstanceScore&) const = default;
};

struct ImageScore {
  ImageId image_id = 0;
  double score = 0;
  std::vector<InstanceScore> top_instances;  // descending by score
  bool operator==(const ImageScore&) const = default;
};

struct SelectionResult {
  std::string strategy_name;
  std::vector<ImageId> selected_ids;
  std::vector<ImageScore> all_scores;
  bool operator==(const SelectionResult&) const = default;
};

/// Instance scores sorted descending; ties keep the lower anchor index first.
inline std::vector<InstanceScore> descend_sort(const std::vector<double>& scores) {
  std::vector<InstanceScore> out(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) out[j] = {j, scores[j]};
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

/**
 * @brief Image uncertainty from per-instance scores: mean of the top
 * min(Z, T) values after a descending sort.
 */
inline ImageScore score_from_instances(ImageId id, const std::vector<double>& instance_scores, int z) {
  if (z < 1) throw ConfigError("Z must be >= 1");
  ImageScore s;
  s.image_id = id;
  auto sorted = descend_sort(instance_scores);
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(z), sorted.size());
  sorted.resize(keep);
  double sum = 0;
  for (const auto& i : sorted) sum += i.score;
  s.score = keep > 0 ? sum / static_cast<double>(keep) : 0.0;
  s.top_instances = std::move(sorted);
  return s;
}

/**
 * @brief Committee score of one image: per-anchor discrepancy (unweighted
 * unless `weighted`), then the mean of the top-Z values.
 */
template <class T>
ImageScore score_image_committee(const InstancePrediction<T>& pred, int z, ImageId id = 0, bool weighted = false,
                                 double gamma_fpil = 1.0) {
  std::vector<double> d = instance_discrepancies(pred);
  if (weighted) {
    const int bg = pred.background();
    for (std::size_t j = 0; j < d.size(); ++j)
      d[j] *= positive_focus_weight(static_cast<double>(pred.main_cls(static_cast<Eigen::Index>(j), bg)), gamma_fpil);
  }
  return score_from_instances(id, d, z);
}

/// Shannon entropy (nats) of one probability row.
template <class Row>
double row_entropy(const Row& row) {
  double h = 0;
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    const double p = static_cast<double>(row(k));
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

/// Entropy baseline: sum of main-classifier entropies over all anchors.
template <class T>
ImageScore score_image_entropy(const InstancePrediction<T>& pred, ImageId id = 0) {
  std::vector<double> h(static_cast<std::size_t>(pred.num_instances()));
  double sum = 0;
  for (Eigen::Index j = 0; j < pred.num_instances(); ++j) {
    h[static_cast<std::size_t>(j)] = row_entropy(pred.main_cls.row(j));
    sum += h[static_cast<std::size_t>(j)];
  }
  ImageScore s;
  s.image_id = id;
  s.score = sum;
  s.top_instances = descend_sort(h);
  return s;
}

/**
 * @brief Highest `budget` scores; ties go to the smaller image id.
 */
inline std::vector<ImageId> select_top(const std::vector<ImageScore>& scores, std::size_t budget) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a].score != scores[b].score) return scores[a].score > scores[b].score;
    return scores[a].image_id < scores[b].image_id;
  });
  std::vector<ImageId> out;
  for (std::size_t i = 0; i < std::min(budget, order.size()); ++i) out.push_back(scores[order[i]].image_id);
  return out;
}

/**
 * @brief Greedy k-center: repeatedly take the unlabeled point farthest
 * (Euclidean) from everything labeled or already chosen.
 */
inline SelectionResult select_core_set(const std::vector<VecX<double>>& labeled_features,
                                       const std::vector<std::pair<ImageId, VecX<double>>>& unlabeled_features,
                                       std::size_t budget) {
  SelectionResult r;
  r.strategy_name = "coreset";
  const std::size_t n = unlabeled_features.size();
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  for (std::size_t u = 0; u < n; ++u)
    for (const auto& l : labeled_features)
      min_dist[u] = std::min(min_dist[u], (unlabeled_features[u].second - l).norm());
  std::vector<bool> taken(n, false);
  for (std::size_t step = 0; step < std::min(budget, n); ++step) {
    std::size_t best = n;
    for (std::size_t u = 0; u < n; ++u) {
      if (taken[u]) continue;
      if (best == n || min_dist[u] > min_dist[best] ||
          (min_dist[u] == min_dist[best] && unlabeled_features[u].first < unlabeled_features[best].first))
        best = u;
    }
    taken[best] = true;
    r.selected_ids.push_back(unlabeled_features[best].first);
    for (std::size_t u = 0; u < n; ++u)
      if (!taken[u])
        min_dist[u] = std::min(min_dist[u], (unlabeled_features[u].second - unlabeled_features[best].second).norm());
  }
  return r;
}

}  // namespace ccad
