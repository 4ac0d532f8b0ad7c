#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ccad/anchors.hpp"
#include "ccad/geometry.hpp"
#include "ccad/layers.hpp"
#include "ccad/rng.hpp"

namespace ccad {

struct DetectorConfig {
  int image_size = 96;
  int in_channels = 3;
  int num_classes = 3;
  // conv1, conv2, stride-8 level, stride-16 level
  std::array<int, 4> widths{16, 32, 48, 64};
  int committee_size = 3;
  double prior_probability = 0.01;  // initial foreground probability of every head
  AnchorConfig anchors;

  int num_outputs() const { return num_classes + 1; }

  void validate() const {
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
    if (committee_size < 0) throw ConfigError("committee_size must be >= 0");
    for (int w : widths)
      if (w < 1) throw ConfigError("layer widths must be positive");
    if (!(prior_probability > 0 && prior_probability < 1)) throw ConfigError("prior_probability must be in (0,1)");
    if (anchors.levels.size() != 2 || anchors.levels[0].stride != 8 || anchors.levels[1].stride != 16)
      throw ConfigError("the backbone exposes exactly two pyramid levels with strides 8 and 16");
    if (image_size % 16 != 0) throw ConfigError("image_size must be divisible by 16");
  }
};

/**
 * @brief Per-anchor outputs of the main detector and the committee.
 *
 * Rows are anchors in AnchorGrid order. Classification rows are softmax
 * probabilities over num_classes + 1 entries, background last.
 */
template <class T>
struct InstancePrediction {
  MatR<T> main_cls;                    // T x (C + 1)
  MatR<T> main_loc;                    // T x 4
  std::vector<MatR<T>> committee_cls;  // N matrices, each T x (C + 1)

  Eigen::Index num_instances() const { return main_cls.rows(); }
  int background() const { return static_cast<int>(main_cls.cols()) - 1; }
  VecX<T> background_score() const { return main_cls.col(background()); }
};

/// Row-wise numerically stable softmax.
template <class T>
MatR<T> softmax_rows(const MatR<T>& logits) {
  MatR<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Back-propagates d(loss)/d(probs) through a row softmax.
template <class T>
MatR<T> softmax_backward(const MatR<T>& probs, const MatR<T>& grad_probs) {
  MatR<T> out(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const T dot = probs.row(r).dot(grad_probs.row(r));
    out.row(r) = probs.row(r).array() * (grad_probs.row(r).array() - dot);
  }
  return out;
}

/// im2col matrices of the two pyramid levels, shared by every 3x3 head.
template <class T>
struct HeadInputs {
  std::array<MatR<T>, 2> cols;
};

template <class T>
struct BackboneTrace {
  Feature<T> input;
  std::array<MatR<T>, 6> cols;
  std::array<Feature<T>, 6> out;  // post-ReLU activations

  const Feature<T>& level(int l) const { return l == 0 ? out[3] : out[5]; }
};

template <class T>
struct ForwardTrace {
  BackboneTrace<T> backbone;
  HeadInputs<T> heads;
  InstancePrediction<T> pred;
};

/**
 * @brief Single-stage anchor detector with an auxiliary classification committee.
 *
 * Backbone: four stride-2 3x3 convolutions plus one stride-1 refinement at
 * each pyramid level (strides 8 and 16). Every head is a 3x3 convolution
 * on the level features. Committee heads read the same features but never
 * send gradients back into the backbone.
 */
template <class T = float>
class Detector {
 public:
  explicit Detector(DetectorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    grid_ = build_anchors(cfg_.image_size, cfg_.anchors);
    const auto& w = cfg_.widths;
    backbone_ = {Conv2d<T>("backbone.conv1", cfg_.in_channels, w[0], 3, 2),
                 Conv2d<T>("backbone.conv2", w[0], w[1], 3, 2),
                 Conv2d<T>("backbone.conv3", w[1], w[2], 3, 2),
                 Conv2d<T>("backbone.conv3b", w[2], w[2], 3, 1),
                 Conv2d<T>("backbone.conv4", w[2], w[3], 3, 2),
                 Conv2d<T>("backbone.conv4b", w[3], w[3], 3, 1)};
    const int k = cfg_.num_outputs();
    for (int l = 0; l < 2; ++l) {
      const int c = l == 0 ? w[2] : w[3];
      const int a = grid_.levels[l].anchors_per_cell;
      const std::string lv = std::to_string(l);
      cls_head_[l] = Conv2d<T>("main.cls.l" + lv, c, a * k, 3, 1);
      loc_head_[l] = Conv2d<T>("main.loc.l" + lv, c, a * 4, 3, 1);
    }
    committee_.resize(static_cast<std::size_t>(cfg_.committee_size));
    for (int i = 0; i < cfg_.committee_size; ++i)
      for (int l = 0; l < 2; ++l) {
        const int c = l == 0 ? w[2] : w[3];
        const int a = grid_.levels[l].anchors_per_cell;
        committee_[i][l] = Conv2d<T>("committee" + std::to_string(i) + ".cls.l" + std::to_string(l), c, a * k, 3, 1);
      }
  }

  const DetectorConfig& config() const { return cfg_; }
  const AnchorGrid& anchors() const { return grid_; }
  bool initialized() const { return initialized_; }
  int committee_size() const { return cfg_.committee_size; }

  /**
   * @brief Random initialisation from independent streams per parameter group,
   * so the backbone and main head do not depend on the committee size.
   */
  void initialize(std::uint64_t seed) {
    Rng backbone_rng(derive_seed(seed, {tag(Stream::kBackboneInit)}));
    for (auto& conv : backbone_) conv.init_he(backbone_rng);
    Rng head_rng(derive_seed(seed, {tag(Stream::kMainHeadInit)}));
    for (int l = 0; l < 2; ++l) {
      init_cls_head(cls_head_[l], grid_.levels[l].anchors_per_cell, head_rng);
      loc_head_[l].init_normal(head_rng, 0.01);
      loc_head_[l].bias.value.setZero();
    }
    for (int i = 0; i < cfg_.committee_size; ++i) {
      Rng rng(derive_seed(seed, {tag(Stream::kCommitteeInit), static_cast<std::uint64_t>(i)}));
      for (int l = 0; l < 2; ++l) init_cls_head(committee_[i][l], grid_.levels[l].anchors_per_cell, rng);
    }
    initialized_ = true;
  }

  /// Copies member 0 into every other committee member (tied committee).
  void tie_committee() {
    for (int i = 1; i < cfg_.committee_size; ++i)
      for (int l = 0; l < 2; ++l) {
        committee_[i][l].weight.value = committee_[0][l].weight.value;
        committee_[i][l].bias.value = committee_[0][l].bias.value;
      }
  }

  // ---- forward -------------------------------------------------------------

  Feature<T> make_input(std::span<const float> image) const {
    const int s = cfg_.image_size;
    if (image.size() != static_cast<std::size_t>(cfg_.in_channels) * s * s)
      throw UsageError("image does not match configured size");
    Feature<T> in(cfg_.in_channels, s, s);
    for (std::size_t i = 0; i < image.size(); ++i) in.data.data()[i] = static_cast<T>(image[i]);
    return in;
  }

  BackboneTrace<T> backbone_forward(std::span<const float> image) const {
    require_initialized();
    BackboneTrace<T> tr;
    tr.input = make_input(image);
    const Feature<T>* x = &tr.input;
    for (std::size_t i = 0; i < backbone_.size(); ++i) {
      tr.out[i] = backbone_[i].forward(*x, &tr.cols[i]);
      relu_inplace(tr.out[i]);
      x = &tr.out[i];
    }
    return tr;
  }

  HeadInputs<T> head_inputs(const BackboneTrace<T>& tr) const {
    HeadInputs<T> h;
    for (int l = 0; l < 2; ++l) h.cols[l] = cls_head_[l].im2col(tr.level(l));
    return h;
  }

  MatR<T> main_cls_logits(const HeadInputs<T>& h) const { return gather(cls_head_, h, cfg_.num_outputs()); }
  MatR<T> main_loc_output(const HeadInputs<T>& h) const { return gather(loc_head_, h, 4); }
  MatR<T> committee_logits(int member, const HeadInputs<T>& h) const {
    return gather(committee_[static_cast<std::size_t>(member)], h, cfg_.num_outputs());
  }

  std::vector<MatR<T>> committee_probs(const HeadInputs<T>& h) const {
    std::vector<MatR<T>> out;
    for (int i = 0; i < cfg_.committee_size; ++i) out.push_back(softmax_rows(committee_logits(i, h)));
    return out;
  }

  ForwardTrace<T> forward_trace(std::span<const float> image) const {
    ForwardTrace<T> tr;
    tr.backbone = backbone_forward(image);
    tr.heads = head_inputs(tr.backbone);
    tr.pred.main_cls = softmax_rows(main_cls_logits(tr.heads));
    tr.pred.main_loc = main_loc_output(tr.heads);
    tr.pred.committee_cls = committee_probs(tr.heads);
    return tr;
  }

  InstancePrediction<T> forward(std::span<const float> image) const { return forward_trace(image).pred; }

  /// Global-average-pooled stride-16 features (one vector per image).
  VecX<double> pooled_feature(std::span<const float> image) const {
    const auto tr = backbone_forward(image);
    return tr.level(1).data.rowwise().mean().template cast<double>();
  }

  // ---- backward ------------------------------------------------------------

  /**
   * @brief Main-detector gradients for one image: fills backbone and main
   * head accumulators. `grad_cls_logits` is T x (C+1), `grad_loc` is T x 4.
   */
  void backward_main(const ForwardTrace<T>& tr, const MatR<T>& grad_cls_logits, const MatR<T>& grad_loc) {
    std::array<MatR<T>, 2> grad_level_cols;
    for (int l = 0; l < 2; ++l) {
      const MatR<T> gc = scatter(grad_cls_logits, l, cfg_.num_outputs());
      const MatR<T> gl = scatter(grad_loc, l, 4);
      cls_head_[l].backward_params(tr.heads.cols[l], gc);
      loc_head_[l].backward_params(tr.heads.cols[l], gl);
      grad_level_cols[l] = cls_head_[l].backward_input_cols(gc) + loc_head_[l].backward_input_cols(gl);
    }
    const auto& bb = tr.backbone;
    Feature<T> g1(bb.out[5].channels, bb.out[5].height, bb.out[5].width);
    cls_head_[1].col2im(grad_level_cols[1], g1);
    Feature<T> g0(bb.out[3].channels, bb.out[3].height, bb.out[3].width);
    cls_head_[0].col2im(grad_level_cols[0], g0);

    // stride-16 branch: conv4b <- conv4 <- level-0 features
    MatR<T> g = std::move(g1.data);
    for (int i = 5; i >= 4; --i) {
      relu_backward_inplace(bb.out[i], g);
      backbone_[i].backward_params(bb.cols[i], g);
      const Feature<T>& in = bb.out[i - 1];
      Feature<T> gin(in.channels, in.height, in.width);
      backbone_[i].col2im(backbone_[i].backward_input_cols(g), gin);
      g = std::move(gin.data);
    }
    g += g0.data;
    for (int i = 3; i >= 0; --i) {
      relu_backward_inplace(bb.out[i], g);
      backbone_[i].backward_params(bb.cols[i], g);
      if (i == 0) break;
      const Feature<T>& in = bb.out[i - 1];
      Feature<T> gin(in.channels, in.height, in.width);
      backbone_[i].col2im(backbone_[i].backward_input_cols(g), gin);
      g = std::move(gin.data);
    }
  }

  /**
   * @brief Committee gradients for one image. The features are constants
   * here: nothing is propagated past the committee heads.
   */
  void backward_committee(const HeadInputs<T>& h, const std::vector<MatR<T>>& grad_logits) {
    for (int i = 0; i < cfg_.committee_size; ++i)
      for (int l = 0; l < 2; ++l)
        committee_[i][l].backward_params(h.cols[l], scatter(grad_logits[i], l, cfg_.num_outputs()));
  }

  // ---- parameters ----------------------------------------------------------

  std::vector<Param<T>*> backbone_params() {
    std::vector<Param<T>*> out;
    for (auto& c : backbone_) push(out, c);
    return out;
  }
  std::vector<Param<T>*> main_head_params() {
    std::vector<Param<T>*> out;
    for (int l = 0; l < 2; ++l) push(out, cls_head_[l]);
    for (int l = 0; l < 2; ++l) push(out, loc_head_[l]);
    return out;
  }
  std::vector<Param<T>*> committee_params() {
    std::vector<Param<T>*> out;
    for (auto& member : committee_)
      for (auto& c : member) push(out, c);
    return out;
  }
  std::vector<Param<T>*> all_params() {
    auto out = backbone_params();
    for (auto* p : main_head_params()) out.push_back(p);
    for (auto* p : committee_params()) out.push_back(p);
    return out;
  }
  std::vector<const Param<T>*> all_params() const {
    std::vector<const Param<T>*> out;
    for (auto* p : const_cast<Detector*>(this)->all_params()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : all_params()) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  void mark_initialized() { initialized_ = true; }

 private:
  void require_initialized() const {
    if (!initialized_) throw UsageError("detector parameters are not initialized");
  }

  void init_cls_head(Conv2d<T>& head, int anchors_per_cell, Rng& rng) {
    head.init_normal(rng, 0.01);
    // Background starts at 1 - prior, foreground classes share the prior.
    const int k = cfg_.num_outputs();
    const double fg_bias = std::log(cfg_.prior_probability / cfg_.num_classes) - std::log(1.0 - cfg_.prior_probability);
    std::normal_distribution<double> jitter(0.0, 0.01);
    for (int a = 0; a < anchors_per_cell; ++a)
      for (int c = 0; c < k; ++c)
        head.bias.value(a * k + c, 0) = static_cast<T>((c == k - 1 ? 0.0 : fg_bias) + jitter(rng));
  }

  static void push(std::vector<Param<T>*>& out, Conv2d<T>& c) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }

  // Level responses (A*K x HW) -> anchor-major rows (T x K).
  MatR<T> gather(const std::array<Conv2d<T>, 2>& heads, const HeadInputs<T>& h, int k) const {
    MatR<T> out(static_cast<Eigen::Index>(grid_.size()), k);
    for (int l = 0; l < 2; ++l) {
      const MatR<T> resp = heads[l].apply(h.cols[l]);
      const auto& info = grid_.levels[l];
      const int a_count = info.anchors_per_cell;
      const int hw = info.grid_h * info.grid_w;
      for (int s = 0; s < hw; ++s)
        for (int a = 0; a < a_count; ++a) {
          const Eigen::Index row = static_cast<Eigen::Index>(info.offset) + s * a_count + a;
          for (int c = 0; c < k; ++c) out(row, c) = resp(a * k + c, s);
        }
    }
    return out;
  }

  MatR<T> scatter(const MatR<T>& rows, int l, int k) const {
    const auto& info = grid_.levels[l];
    const int a_count = info.anchors_per_cell;
    const int hw = info.grid_h * info.grid_w;
    MatR<T> out(a_count * k, hw);
    for (int s = 0; s < hw; ++s)
      for (int a = 0; a < a_count; ++a) {
        const Eigen::Index row = static_cast<Eigen::Index>(info.offset) + s * a_count + a;
        for (int c = 0; c < k; ++c) out(a * k + c, s) = rows(row, c);
      }
    return out;
  }

  DetectorConfig cfg_;
  AnchorGrid grid_;
  std::array<Conv2d<T>, 6> backbone_;
  std::array<Conv2d<T>, 2> cls_head_;
  std::array<Conv2d<T>, 2> loc_head_;
  std::vector<std::array<Conv2d<T>, 2>> committee_;
  bool initialized_ = false;
};

/**
 * @brief Decodes main-head outputs into final detections: background
 * dropped, score filter, class-wise greedy NMS, top `max_detections`.
 */
template <class T>
std::vector<Detection> decode_detections(const InstancePrediction<T>& pred, const AnchorGrid& grid,
                                         double score_threshold, double nms_iou, std::size_t max_detections = 100) {
  std::vector<Detection> candidates;
  if (score_threshold >= 1.0) return candidates;
  const int bg = pred.background();
  const double size = grid.image_size;
  for (Eigen::Index j = 0; j < pred.num_instances(); ++j)
    for (int c = 0; c < bg; ++c) {
      const double score = static_cast<double>(pred.main_cls(j, c));
      if (score < score_threshold) continue;
      const std::array<double, 4> d{static_cast<double>(pred.main_loc(j, 0)), static_cast<double>(pred.main_loc(j, 1)),
                                    static_cast<double>(pred.main_loc(j, 2)), static_cast<double>(pred.main_loc(j, 3))};
      const BBox box = decode_box(d, grid.anchors[static_cast<std::size_t>(j)]).clipped(size, size);
      if (!box.valid()) continue;
      candidates.push_back({box, c, std::min(score, 1.0)});
    }
  std::vector<Detection> out;
  for (std::size_t i : nms(candidates, nms_iou)) {
    if (out.size() >= max_detections) break;
    out.push_back(candidates[i]);
  }
  return out;
}

template <class T>
std::vector<Detection> predict(const Detector<T>& model, std::span<const float> image, double score_threshold = 0.05,
                               double nms_iou = 0.5) {
  return decode_detections(model.forward(image), model.anchors(), score_threshold, nms_iou);
}

}  // namespace ccad
