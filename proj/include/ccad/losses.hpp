#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

#include "ccad/anchors.hpp"
#include "ccad/detector.hpp"
#include "ccad/layers.hpp"

namespace ccad {

inline constexpr double kProbEpsilon = 1e-7;

/// How the summed focal loss is normalised.
enum class FocalNormalization {
  kNonIgnored,  // mean over every non-ignored anchor
  kPositives,   // divide by max(1, number of positive anchors)
};

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
  FocalNormalization normalization = FocalNormalization::kNonIgnored;
};

/**
 * @brief Softmax focal loss -alpha_t (1 - p_t)^gamma log p_t over non-ignored anchors.
 *
 * alpha_t is `alpha` on foreground targets and 1 - alpha on background.
 * When `grad_logits` is given it receives d(loss)/d(logits) (same shape as
 * `probs`, zero rows for ignored anchors).
 */
template <class T>
T focal_loss(const MatR<T>& probs, const InstanceTargets& targets, const FocalParams& fp = {},
             MatR<T>* grad_logits = nullptr) {
  const Eigen::Index rows = probs.rows();
  if (grad_logits) grad_logits->setZero(rows, probs.cols());
  double sum = 0;
  std::size_t used = 0;
  for (Eigen::Index j = 0; j < rows; ++j) {
    if (targets.ignore_mask[static_cast<std::size_t>(j)]) continue;
    ++used;
  }
  const double denom = fp.normalization == FocalNormalization::kNonIgnored
                           ? static_cast<double>(std::max<std::size_t>(used, 1))
                           : static_cast<double>(std::max<std::size_t>(targets.num_positive(), 1));
  for (Eigen::Index j = 0; j < rows; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (targets.ignore_mask[ju]) continue;
    const int t = targets.cls_target[ju];
    const double alpha_t = t == targets.background ? 1.0 - fp.alpha : fp.alpha;
    const double p = static_cast<double>(probs(j, t));
    const double pc = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
    const double one_minus = 1.0 - pc;
    const double modulator = fp.gamma == 0.0 ? 1.0 : std::pow(one_minus, fp.gamma);
    sum += -alpha_t * modulator * std::log(pc);
    if (grad_logits && p == pc) {
      // d/dp_t, then through softmax: d p_t / d z_k = p_t (delta_tk - p_k)
      const double dmod = fp.gamma == 0.0 ? 0.0 : fp.gamma * std::pow(one_minus, fp.gamma - 1.0);
      const double dl_dp = alpha_t * (dmod * std::log(pc) - modulator / pc);
      const double scale = dl_dp * p / denom;
      for (Eigen::Index k = 0; k < probs.cols(); ++k)
        (*grad_logits)(j, k) = static_cast<T>(scale * ((k == t ? 1.0 : 0.0) - static_cast<double>(probs(j, k))));
    }
  }
  return static_cast<T>(sum / denom);
}

/**
 * @brief Smooth L1 summed over the four box coordinates and averaged over rows.
 * Returns 0 for zero rows.
 */
template <class T>
T smooth_l1(const MatR<T>& pred, const MatR<T>& target, MatR<T>* grad = nullptr) {
  const Eigen::Index rows = pred.rows();
  if (grad) grad->setZero(rows, pred.cols());
  if (rows == 0) return T(0);
  double sum = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double x = static_cast<double>(pred(r, c)) - static_cast<double>(target(r, c));
      const double ax = std::abs(x);
      sum += ax < 1.0 ? 0.5 * x * x : ax - 0.5;
      if (grad) (*grad)(r, c) = static_cast<T>((ax < 1.0 ? x : (x > 0 ? 1.0 : -1.0)) / static_cast<double>(rows));
    }
  return static_cast<T>(sum / static_cast<double>(rows));
}

template <class T>
struct MainLossGrad {
  MatR<T> cls_logits;  // T x (C+1)
  MatR<T> loc;         // T x 4
};

/// Focal loss on the main classifier plus smooth L1 over positive anchors, one image.
template <class T>
T main_loss(const InstancePrediction<T>& pred, const InstanceTargets& targets, const FocalParams& fp = {},
            MainLossGrad<T>* grad = nullptr) {
  const T cls = focal_loss(pred.main_cls, targets, fp, grad ? &grad->cls_logits : nullptr);
  std::vector<Eigen::Index> pos;
  for (std::size_t j = 0; j < targets.positive_mask.size(); ++j)
    if (targets.positive_mask[j]) pos.push_back(static_cast<Eigen::Index>(j));
  MatR<T> p(static_cast<Eigen::Index>(pos.size()), 4), t(static_cast<Eigen::Index>(pos.size()), 4);
  for (std::size_t r = 0; r < pos.size(); ++r) {
    p.row(static_cast<Eigen::Index>(r)) = pred.main_loc.row(pos[r]);
    for (int c = 0; c < 4; ++c)
      t(static_cast<Eigen::Index>(r), c) = static_cast<T>(targets.loc_target[static_cast<std::size_t>(pos[r])][c]);
  }
  MatR<T> g;
  const T loc = smooth_l1(p, t, grad ? &g : nullptr);
  if (grad) {
    grad->loc.setZero(pred.main_loc.rows(), 4);
    for (std::size_t r = 0; r < pos.size(); ++r) grad->loc.row(pos[r]) = g.row(static_cast<Eigen::Index>(r));
  }
  return cls + loc;
}

/// Mean focal loss over committee members, one image.
template <class T>
T committee_supervised_loss(const InstancePrediction<T>& pred, const InstanceTargets& targets,
                            const FocalParams& fp = {}, std::vector<MatR<T>>* grad_logits = nullptr) {
  const std::size_t n = pred.committee_cls.size();
  if (n == 0) return T(0);
  if (grad_logits) grad_logits->assign(n, MatR<T>());
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += static_cast<double>(
        focal_loss(pred.committee_cls[i], targets, fp, grad_logits ? &(*grad_logits)[i] : nullptr));
    if (grad_logits) (*grad_logits)[i] /= static_cast<T>(n);
  }
  return static_cast<T>(sum / static_cast<double>(n));
}

/**
 * @brief Committee disagreement on one instance in group form,
 * (2/N) * sum_i ||y_i - mean(y)||^2, for the N x K matrix of member outputs.
 *
 * This equals the mean over all ordered member pairs (i, t), including
 * i == t, of ||y_i - y_t||^2, but costs O(N K). `grad`, when given,
 * receives d/d(rows) = (4/N)(y_i - mean(y)).
 */
template <class Derived>
double instance_discrepancy(const Eigen::MatrixBase<Derived>& rows, MatR<typename Derived::Scalar>* grad = nullptr) {
  using T = typename Derived::Scalar;
  const Eigen::Index n = rows.rows();
  if (n < 2) throw ConfigError("committee discrepancy needs at least two members");
  // Offsets from the first member keep identical members at exactly zero.
  const MatR<T> d = rows.rowwise() - rows.row(0);
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mean = d.colwise().mean();
  double sum = 0;
  for (Eigen::Index i = 0; i < n; ++i) sum += static_cast<double>((d.row(i) - mean).squaredNorm());
  if (grad) {
    *grad = d.rowwise() - mean;
    *grad *= static_cast<T>(4.0 / static_cast<double>(n));
  }
  return 2.0 / static_cast<double>(n) * sum;
}

/// D_ins for every anchor of a prediction (length T).
template <class T>
std::vector<double> instance_discrepancies(const InstancePrediction<T>& pred) {
  const std::size_t n = pred.committee_cls.size();
  if (n < 2) throw ConfigError("committee discrepancy needs at least two members");
  const Eigen::Index t = pred.num_instances(), k = pred.main_cls.cols();
  std::vector<double> out(static_cast<std::size_t>(t));
  MatR<T> rows(static_cast<Eigen::Index>(n), k);
  for (Eigen::Index j = 0; j < t; ++j) {
    for (std::size_t i = 0; i < n; ++i) rows.row(static_cast<Eigen::Index>(i)) = pred.committee_cls[i].row(j);
    out[static_cast<std::size_t>(j)] = instance_discrepancy(rows);
  }
  return out;
}

/// Instance weight (1 - w_b)^gamma; the background score is a constant here.
inline double positive_focus_weight(double background_score, double gamma) {
  return std::pow(std::max(0.0, 1.0 - background_score), gamma);
}

/**
 * @brief Mean committee discrepancy over the T anchors of one image,
 * optionally weighted per anchor by (1 - w_b)^gamma_fpil.
 *
 * `grad_logits` receives d/d(committee logits) per member. The background
 * score is treated as a constant, so no gradient reaches the main head.
 */
template <class T>
double image_discrepancy(const InstancePrediction<T>& pred, bool weighted, double gamma_fpil = 1.0,
                         std::vector<MatR<T>>* grad_logits = nullptr) {
  if (weighted && !(gamma_fpil > 0)) throw ConfigError("gamma_fpil must be positive");
  const std::size_t n = pred.committee_cls.size();
  if (n < 2) throw ConfigError("committee discrepancy needs at least two members");
  const Eigen::Index t = pred.num_instances(), k = pred.main_cls.cols();
  std::vector<MatR<T>> grad_probs;
  if (grad_logits) grad_probs.assign(n, MatR<T>::Zero(t, k));
  const int bg = pred.background();
  MatR<T> rows(static_cast<Eigen::Index>(n), k), g;
  double sum = 0;
  for (Eigen::Index j = 0; j < t; ++j) {
    const double w = weighted ? positive_focus_weight(static_cast<double>(pred.main_cls(j, bg)), gamma_fpil) : 1.0;
    if (w == 0.0 && !grad_logits) continue;
    for (std::size_t i = 0; i < n; ++i) rows.row(static_cast<Eigen::Index>(i)) = pred.committee_cls[i].row(j);
    sum += w * instance_discrepancy(rows, grad_logits ? &g : nullptr);
    if (grad_logits) {
      const T scale = static_cast<T>(w / static_cast<double>(t));
      for (std::size_t i = 0; i < n; ++i) grad_probs[i].row(j) = g.row(static_cast<Eigen::Index>(i)) * scale;
    }
  }
  if (grad_logits) {
    grad_logits->clear();
    for (std::size_t i = 0; i < n; ++i) grad_logits->push_back(softmax_backward(pred.committee_cls[i], grad_probs[i]));
  }
  return sum / static_cast<double>(t);
}

struct LossBreakdown {
  double l_main = 0;
  double l_com = 0;
  double d_com = 0;
  double total = 0;
  double lambda = 1;
  double gamma_fpil = 1;
};

/// total = l_main + l_com - lambda * d_com; the committee maximises d_com.
inline LossBreakdown assemble_total(double l_main, double l_com, double d_com, double lambda,
                                    double gamma_fpil = 1.0) {
  if (!(lambda > 0)) throw ConfigError("lambda must be positive");
  LossBreakdown b;
  b.l_main = l_main;
  b.l_com = l_com;
  b.d_com = d_com;
  b.lambda = lambda;
  b.gamma_fpil = gamma_fpil;
  b.total = l_main + l_com - lambda * d_com;
  return b;
}

}  // namespace ccad
