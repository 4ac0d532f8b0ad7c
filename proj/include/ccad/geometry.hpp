#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ccad {

/// Thrown for any invalid configuration value.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a state transition would break a data-structure invariant.
struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Thrown when an API is used out of order (e.g. forward on an uninitialized model).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

/**
 * @brief Axis-aligned box in pixel coordinates, (x_min, y_min) inclusive corner.
 */
struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min < x_max && y_min < y_max;
  }

  BBox clipped(double image_w, double image_h) const {
    return {std::clamp(x_min, 0.0, image_w), std::clamp(y_min, 0.0, image_h),
            std::clamp(x_max, 0.0, image_w), std::clamp(y_max, 0.0, image_h)};
  }

  static BBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  bool operator==(const BBox&) const = default;
};

struct Detection {
  BBox box;
  int class_id = 0;
  double confidence = 0;
};

/// Intersection over union; 0 for disjoint boxes.
inline double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Box regression parameterisation shared by target encoding and decoding:
// (dx, dy) = center offset / anchor size, (dw, dh) = log size ratio.
inline constexpr double kMaxLogRatio = 4.1351665567423561;  // log(1000/16)

inline std::array<double, 4> encode_box(const BBox& gt, const BBox& anchor) {
  const double aw = anchor.width(), ah = anchor.height();
  return {(gt.center_x() - anchor.center_x()) / aw, (gt.center_y() - anchor.center_y()) / ah,
          std::log(gt.width() / aw), std::log(gt.height() / ah)};
}

inline BBox decode_box(const std::array<double, 4>& d, const BBox& anchor) {
  const double aw = anchor.width(), ah = anchor.height();
  const double cx = anchor.center_x() + d[0] * aw;
  const double cy = anchor.center_y() + d[1] * ah;
  const double w = aw * std::exp(std::min(d[2], kMaxLogRatio));
  const double h = ah * std::exp(std::min(d[3], kMaxLogRatio));
  return BBox::from_center(cx, cy, w, h);
}

/**
 * @brief Class-wise greedy NMS. Returns indices of kept detections in
 * descending confidence order; equal confidences keep input order.
 */
inline std::vector<std::size_t> nms(const std::vector<Detection>& dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (dets[k].class_id == dets[i].class_id && iou(dets[k].box, dets[i].box) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

}  // namespace ccad
