#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ccad/geometry.hpp"

namespace ccad {

using ImageId = std::int64_t;

struct GroundTruthBox {
  ImageId image_id = 0;
  int class_id = 0;
  BBox box;
};

struct ImageDetection {
  ImageId image_id = 0;
  Detection det;
};

struct EvalResult {
  std::map<int, double> per_class_ap;
  double map_50 = 0;
};

/**
 * @brief Area under the all-point interpolated precision/recall curve.
 *
 * `is_tp` is the match outcome for predictions already sorted by descending
 * confidence; `num_gt` > 0.
 */
inline double average_precision_all_point(const std::vector<bool>& is_tp, std::size_t num_gt) {
  const std::size_t n = is_tp.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_tp[i]) ++tp;
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // Precision envelope from the right, then integrate over recall steps.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

/**
 * @brief VOC-style mean average precision at a single IoU threshold.
 *
 * Predictions are ranked by confidence (ties: image_id, then input order).
 * Each prediction is compared to the highest-IoU ground truth of its class
 * in the same image; it is a true positive when that IoU reaches the
 * threshold and the box was not already claimed. Classes with no ground
 * truth are left out of the mean.
 */
inline EvalResult evaluate_map(const std::vector<ImageDetection>& predictions,
                               const std::vector<GroundTruthBox>& ground_truth,
                               double iou_threshold = 0.5) {
  if (!(iou_threshold > 0 && iou_threshold < 1)) throw ConfigError("iou_threshold must be in (0,1)");
  if (ground_truth.empty()) throw ConfigError("evaluation split has no ground-truth boxes");

  std::map<int, std::size_t> gt_count;
  // (class, image) -> indices into ground_truth
  std::map<std::pair<int, ImageId>, std::vector<std::size_t>> gt_index;
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    const auto& gt = ground_truth[g];
    ++gt_count[gt.class_id];
    gt_index[{gt.class_id, gt.image_id}].push_back(g);
  }

  std::vector<std::size_t> order(predictions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = predictions[a];
    const auto& pb = predictions[b];
    if (pa.det.confidence != pb.det.confidence) return pa.det.confidence > pb.det.confidence;
    return pa.image_id < pb.image_id;
  });

  std::map<int, std::vector<bool>> outcomes;
  std::vector<bool> claimed(ground_truth.size(), false);
  for (std::size_t idx : order) {
    const auto& p = predictions[idx];
    if (!gt_count.contains(p.det.class_id)) continue;
    bool tp = false;
    auto it = gt_index.find({p.det.class_id, p.image_id});
    if (it != gt_index.end()) {
      double best = -1;
      std::size_t best_g = 0;
      for (std::size_t g : it->second) {
        const double o = iou(p.det.box, ground_truth[g].box);
        if (o > best) {
          best = o;
          best_g = g;
        }
      }
      if (best >= iou_threshold && !claimed[best_g]) {
        claimed[best_g] = true;
        tp = true;
      }
    }
    outcomes[p.det.class_id].push_back(tp);
  }

  EvalResult result;
  double sum = 0;
  for (const auto& [cls, n] : gt_count) {
    const double ap = average_precision_all_point(outcomes[cls], n);
    result.per_class_ap[cls] = ap;
    sum += ap;
  }
  result.map_50 = sum / static_cast<double>(gt_count.size());
  return result;
}

// Line records for audit dumps: "image_id class_id x_min y_min x_max y_max [confidence]".

inline void write_ground_truth_records(std::ostream& os, const std::vector<GroundTruthBox>& gts) {
  os << std::setprecision(17);
  for (const auto& g : gts)
    os << g.image_id << ' ' << g.class_id << ' ' << g.box.x_min << ' ' << g.box.y_min << ' '
       << g.box.x_max << ' ' << g.box.y_max << '\n';
}

inline void write_detection_records(std::ostream& os, const std::vector<ImageDetection>& dets) {
  os << std::setprecision(17);
  for (const auto& d : dets)
    os << d.image_id << ' ' << d.det.class_id << ' ' << d.det.box.x_min << ' ' << d.det.box.y_min
       << ' ' << d.det.box.x_max << ' ' << d.det.box.y_max << ' ' << d.det.confidence << '\n';
}

inline std::vector<GroundTruthBox> read_ground_truth_records(std::istream& is) {
  std::vector<GroundTruthBox> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    GroundTruthBox g;
    if (!(ls >> g.image_id >> g.class_id >> g.box.x_min >> g.box.y_min >> g.box.x_max >> g.box.y_max))
      throw ConfigError("malformed ground-truth record: " + line);
    out.push_back(g);
  }
  return out;
}

inline std::vector<ImageDetection> read_detection_records(std::istream& is) {
  std::vector<ImageDetection> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ImageDetection d;
    if (!(ls >> d.image_id >> d.det.class_id >> d.det.box.x_min >> d.det.box.y_min >> d.det.box.x_max >>
          d.det.box.y_max >> d.det.confidence))
      throw ConfigError("malformed detection record: " + line);
    out.push_back(d);
  }
  return out;
}

}  // namespace ccad
