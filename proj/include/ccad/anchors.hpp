#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ccad/geometry.hpp"
#include "ccad/synthetic.hpp"

namespace ccad {

struct AnchorLevel {
  int stride = 16;
  double base_size = 32;
  std::vector<double> scales{1.0};
  std::vector<double> aspect_ratios{1.0};  // height / width

  int anchors_per_cell() const { return static_cast<int>(scales.size() * aspect_ratios.size()); }
};

struct AnchorConfig {
  std::vector<AnchorLevel> levels{
      {8, 12.0, {1.0, 1.4142135623730951, 2.0}, {1.0}},
      {16, 32.0, {1.0, 1.4142135623730951, 2.0}, {1.0}},
  };
  double positive_iou = 0.5;
  double negative_iou = 0.4;
};

/**
 * @brief Anchors concatenated over pyramid levels.
 *
 * Within a level the index is ((y * grid_w + x) * anchors_per_cell + a).
 */
struct AnchorGrid {
  struct Level {
    std::size_t offset = 0;
    int grid_h = 0, grid_w = 0, anchors_per_cell = 0;
    std::size_t count() const { return static_cast<std::size_t>(grid_h) * grid_w * anchors_per_cell; }
  };
  std::vector<BBox> anchors;
  std::vector<Level> levels;
  int image_size = 0;

  std::size_t size() const { return anchors.size(); }
};

inline AnchorGrid build_anchors(int image_size, const AnchorConfig& cfg) {
  if (cfg.levels.empty()) throw ConfigError("anchor config needs at least one pyramid level");
  AnchorGrid grid;
  grid.image_size = image_size;
  for (const auto& lvl : cfg.levels) {
    if (lvl.stride <= 0 || image_size % lvl.stride != 0)
      throw ConfigError("anchor stride " + std::to_string(lvl.stride) + " does not divide image size " +
                        std::to_string(image_size));
    if (lvl.scales.empty() || lvl.aspect_ratios.empty()) throw ConfigError("anchor level needs scales and ratios");
    AnchorGrid::Level info;
    info.offset = grid.anchors.size();
    info.grid_h = info.grid_w = image_size / lvl.stride;
    info.anchors_per_cell = lvl.anchors_per_cell();
    for (int y = 0; y < info.grid_h; ++y)
      for (int x = 0; x < info.grid_w; ++x) {
        const double cx = (x + 0.5) * lvl.stride, cy = (y + 0.5) * lvl.stride;
        for (double s : lvl.scales)
          for (double r : lvl.aspect_ratios) {
            const double side = lvl.base_size * s;
            const double w = side / std::sqrt(r), h = side * std::sqrt(r);
            grid.anchors.push_back(BBox::from_center(cx, cy, w, h).clipped(image_size, image_size));
          }
      }
    grid.levels.push_back(info);
  }
  return grid;
}

struct InstanceTargets {
  int background = 0;               // == num_classes
  std::vector<int> cls_target;      // per anchor, background when not positive
  std::vector<bool> positive_mask;  // per anchor
  std::vector<bool> ignore_mask;    // per anchor
  std::vector<int> matched_gt;      // per anchor, -1 when unmatched
  std::vector<std::array<double, 4>> loc_target;  // per anchor, zeros unless positive

  std::size_t num_positive() const {
    std::size_t n = 0;
    for (bool p : positive_mask) n += p;
    return n;
  }
};

/**
 * @brief IoU-based anchor assignment.
 *
 * Positive at IoU >= positive_iou with the best ground truth, negative
 * below negative_iou, ignored in between. Each ground truth also claims its
 * own highest-IoU anchor so no object is left without a positive.
 */
inline InstanceTargets match_targets(const AnchorGrid& grid, const std::vector<Annotation>& annotations,
                                     int num_classes, const AnchorConfig& cfg = {}) {
  const std::size_t t = grid.size();
  InstanceTargets out;
  out.background = num_classes;
  out.cls_target.assign(t, num_classes);
  out.positive_mask.assign(t, false);
  out.ignore_mask.assign(t, false);
  out.matched_gt.assign(t, -1);
  out.loc_target.assign(t, {0, 0, 0, 0});
  if (annotations.empty()) return out;

  const std::size_t g = annotations.size();
  std::vector<double> best_anchor_iou(g, 0.0);
  std::vector<std::size_t> best_anchor(g, t);
  for (std::size_t j = 0; j < t; ++j) {
    double best = 0;
    int best_g = -1;
    for (std::size_t k = 0; k < g; ++k) {
      const double o = iou(grid.anchors[j], annotations[k].box);
      if (o > best) {
        best = o;
        best_g = static_cast<int>(k);
      }
      if (o > best_anchor_iou[k]) {
        best_anchor_iou[k] = o;
        best_anchor[k] = j;
      }
    }
    if (best >= cfg.positive_iou) {
      out.positive_mask[j] = true;
      out.matched_gt[j] = best_g;
    } else if (best >= cfg.negative_iou) {
      out.ignore_mask[j] = true;
    }
  }
  for (std::size_t k = 0; k < g; ++k) {
    const std::size_t j = best_anchor[k];
    if (j == t) continue;  // object overlaps no anchor at all
    out.positive_mask[j] = true;
    out.ignore_mask[j] = false;
    out.matched_gt[j] = static_cast<int>(k);
  }
  for (std::size_t j = 0; j < t; ++j) {
    if (!out.positive_mask[j]) continue;
    const auto& gt = annotations[static_cast<std::size_t>(out.matched_gt[j])];
    out.cls_target[j] = gt.class_id;
    out.loc_target[j] = encode_box(gt.box, grid.anchors[j]);
  }
  return out;
}

}  // namespace ccad
