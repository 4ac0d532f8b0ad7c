#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ccad/eval.hpp"
#include "ccad/geometry.hpp"
#include "ccad/rng.hpp"

namespace ccad {

enum class Shape : int { kCircle = 0, kSquare = 1, kTriangle = 2, kDiamond = 3, kRing = 4 };

inline constexpr int kMaxShapeClasses = 5;

inline const char* shape_name(int class_id) {
  static constexpr const char* names[] = {"circle", "square", "triangle", "diamond", "ring"};
  return (class_id >= 0 && class_id < kMaxShapeClasses) ? names[class_id] : "unknown";
}

struct SizeRange {
  int min = 0, max = 0;
};

/// Knobs for one image regime (object-rich "hard" images vs sparse "easy" ones).
struct RegimeConfig {
  SizeRange objects;
  SizeRange object_side;   // pixels, boxes are square
  double clutter_min = 0;  // distractor texture density
  double clutter_max = 0;
  double max_overlap_iou = 0;  // > 0 allows partial occlusion
};

struct GeneratorConfig {
  int image_size = 96;
  int channels = 3;  // channel 0 carries the scene, the rest are noise
  int num_classes = 3;
  int max_objects = 6;
  double min_object_area = 64;
  double hard_fraction = 0.3;
  double noise_std = 0.06;
  RegimeConfig hard{{3, 6}, {12, 22}, 0.5, 1.0, 0.2};
  RegimeConfig easy{{0, 2}, {24, 44}, 0.0, 0.3, 0.0};

  void validate() const {
    if (image_size <= 0 || channels <= 0) throw ConfigError("image_size and channels must be positive");
    if (num_classes < 1 || num_classes > kMaxShapeClasses)
      throw ConfigError("num_classes must be in [1, " + std::to_string(kMaxShapeClasses) + "]");
    if (max_objects < 0) throw ConfigError("max_objects must be >= 0");
    if (hard_fraction < 0 || hard_fraction > 1) throw ConfigError("hard_fraction must be in [0,1]");
    for (const RegimeConfig* r : {&hard, &easy}) {
      if (r->objects.min < 0 || r->objects.min > r->objects.max)
        throw ConfigError("invalid object count range");
      if (r->object_side.min <= 0 || r->object_side.min > r->object_side.max)
        throw ConfigError("invalid object size range");
      if (r->object_side.max > image_size) throw ConfigError("object size exceeds image size");
      if (static_cast<double>(r->object_side.max) * r->object_side.max < min_object_area)
        throw ConfigError("min_object_area is larger than the largest allowed object");
      if (r->clutter_min < 0 || r->clutter_max > 1 || r->clutter_min > r->clutter_max)
        throw ConfigError("clutter range must lie in [0,1]");
    }
    if (min_object_area > static_cast<double>(image_size) * image_size)
      throw ConfigError("min_object_area too large for image size");
  }
};

struct Annotation {
  int class_id = 0;
  BBox box;
  bool operator==(const Annotation&) const = default;
};

struct SyntheticSample {
  ImageId image_id = 0;
  int height = 0, width = 0, channels = 0;
  std::vector<float> image;  // planar channels x height x width, values in [0,1]
  std::vector<Annotation> annotations;
  double clutter_level = 0;
  bool hard = false;

  float at(int c, int y, int x) const { return image[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

namespace detail {

inline bool inside_shape(Shape shape, double px, double py, const BBox& b) {
  const double cx = b.center_x(), cy = b.center_y();
  const double r = 0.5 * b.width();
  switch (shape) {
    case Shape::kCircle:
      return (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
    case Shape::kSquare:
      return px >= b.x_min && px <= b.x_max && py >= b.y_min && py <= b.y_max;
    case Shape::kTriangle: {
      // apex at top-center, base along the bottom edge
      if (py < b.y_min || py > b.y_max) return false;
      const double t = (py - b.y_min) / b.height();
      return std::abs(px - cx) <= t * r;
    }
    case Shape::kDiamond:
      return std::abs(px - cx) + std::abs(py - cy) <= r;
    case Shape::kRing: {
      const double d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
      return d2 <= r * r && d2 >= 0.36 * r * r;
    }
  }
  return false;
}

inline void draw_clutter(std::vector<float>& plane, int size, double level, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  // Short strokes and specks: textured but never shape-like.
  const int strokes = static_cast<int>(std::lround(level * 40));
  for (int s = 0; s < strokes; ++s) {
    double x = u01(rng) * size, y = u01(rng) * size;
    const double angle = u01(rng) * 6.283185307179586;
    const double len = 4 + u01(rng) * 10;
    const float value = static_cast<float>(u01(rng));
    for (int k = 0; k < static_cast<int>(len); ++k) {
      const int xi = static_cast<int>(x), yi = static_cast<int>(y);
      if (xi >= 0 && xi < size && yi >= 0 && yi < size) plane[static_cast<std::size_t>(yi) * size + xi] = value;
      x += std::cos(angle);
      y += std::sin(angle);
    }
  }
  const int specks = static_cast<int>(std::lround(level * 120));
  for (int s = 0; s < specks; ++s) {
    const int xi = static_cast<int>(u01(rng) * size), yi = static_cast<int>(u01(rng) * size);
    const float value = static_cast<float>(u01(rng));
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        if (xi + dx < size && yi + dy < size) plane[static_cast<std::size_t>(yi + dy) * size + xi + dx] = value;
  }
}

}  // namespace detail

/// Renders one image; a pure function of (seed, image_id, config).
inline SyntheticSample generate_sample(std::uint64_t seed, ImageId image_id, const GeneratorConfig& cfg) {
  Rng rng(derive_seed(seed, {tag(Stream::kDataset), static_cast<std::uint64_t>(image_id)}));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  SyntheticSample s;
  s.image_id = image_id;
  s.height = s.width = cfg.image_size;
  s.channels = cfg.channels;
  s.hard = u01(rng) < cfg.hard_fraction;
  const RegimeConfig& regime = s.hard ? cfg.hard : cfg.easy;
  s.clutter_level = regime.clutter_min + u01(rng) * (regime.clutter_max - regime.clutter_min);

  const int size = cfg.image_size;
  const std::size_t plane_size = static_cast<std::size_t>(size) * size;
  std::vector<float> plane(plane_size);
  const double base = 0.3 + 0.4 * u01(rng);
  const double gx = (u01(rng) - 0.5) * 0.2, gy = (u01(rng) - 0.5) * 0.2;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      plane[static_cast<std::size_t>(y) * size + x] =
          static_cast<float>(base + gx * (x / double(size) - 0.5) + gy * (y / double(size) - 0.5));
  detail::draw_clutter(plane, size, s.clutter_level, rng);

  const int min_side = std::max(regime.object_side.min, static_cast<int>(std::ceil(std::sqrt(cfg.min_object_area))));
  const int count = std::min(uniform_int(regime.objects.min, regime.objects.max), cfg.max_objects);
  for (int n = 0; n < count; ++n) {
    // Rejection-sample a placement respecting the overlap budget.
    for (int attempt = 0; attempt < 50; ++attempt) {
      const int side = uniform_int(min_side, regime.object_side.max);
      const int x0 = uniform_int(0, size - side), y0 = uniform_int(0, size - side);
      const BBox box{double(x0), double(y0), double(x0 + side), double(y0 + side)};
      bool ok = true;
      for (const auto& a : s.annotations)
        if (iou(a.box, box) > regime.max_overlap_iou || (regime.max_overlap_iou == 0 && iou(a.box, box) > 0)) ok = false;
      if (!ok) continue;
      const int cls = uniform_int(0, cfg.num_classes - 1);
      const double sign = u01(rng) < 0.5 ? -1.0 : 1.0;
      double value = base + sign * (0.3 + 0.2 * u01(rng));
      if (value < 0.05 || value > 0.95) value = base - sign * (0.3 + 0.2 * u01(rng));
      for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x)
          if (detail::inside_shape(static_cast<Shape>(cls), x + 0.5, y + 0.5, box))
            plane[static_cast<std::size_t>(y) * size + x] = static_cast<float>(value);
      s.annotations.push_back({cls, box});
      break;
    }
  }

  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  s.image.assign(plane_size * cfg.channels, 0.0f);
  for (std::size_t i = 0; i < plane_size; ++i)
    s.image[i] = static_cast<float>(std::clamp(plane[i] + noise(rng), 0.0, 1.0));
  for (int c = 1; c < cfg.channels; ++c)
    for (std::size_t i = 0; i < plane_size; ++i)
      s.image[c * plane_size + i] = static_cast<float>(u01(rng));
  return s;
}

/// Generates images with ids 0..q-1.
inline std::vector<SyntheticSample> generate_dataset(std::uint64_t seed, int q, const GeneratorConfig& cfg) {
  if (q <= 0) throw ConfigError("dataset size must be positive");
  cfg.validate();
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) out.push_back(generate_sample(seed, i, cfg));
  return out;
}

/// Returns human-readable violations of the sample invariants (empty when valid).
inline std::vector<std::string> validate_sample(const SyntheticSample& s, const GeneratorConfig& cfg) {
  std::vector<std::string> problems;
  const auto id = std::to_string(s.image_id);
  if (static_cast<int>(s.annotations.size()) > cfg.max_objects) problems.push_back(id + ": too many objects");
  if (s.image.size() != static_cast<std::size_t>(s.channels) * s.height * s.width)
    problems.push_back(id + ": image buffer size mismatch");
  for (float v : s.image)
    if (!(v >= 0.0f && v <= 1.0f)) {
      problems.push_back(id + ": pixel outside [0,1]");
      break;
    }
  for (const auto& a : s.annotations) {
    if (!a.box.valid()) problems.push_back(id + ": degenerate box");
    if (a.box.x_min < 0 || a.box.y_min < 0 || a.box.x_max > s.width || a.box.y_max > s.height)
      problems.push_back(id + ": box outside image");
    if (a.box.area() < cfg.min_object_area) problems.push_back(id + ": box below min area");
    if (a.class_id < 0 || a.class_id >= cfg.num_classes) problems.push_back(id + ": bad class id");
  }
  return problems;
}

inline std::vector<GroundTruthBox> ground_truth_of(const std::vector<const SyntheticSample*>& samples) {
  std::vector<GroundTruthBox> out;
  for (const auto* s : samples)
    for (const auto& a : s->annotations) out.push_back({s->image_id, a.class_id, a.box});
  return out;
}

}  // namespace ccad
