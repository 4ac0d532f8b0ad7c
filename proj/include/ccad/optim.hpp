#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ccad/geometry.hpp"
#include "ccad/layers.hpp"

namespace ccad {

enum class OptimizerKind { kSgd, kAdam };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer: " + s);
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // SGD momentum, Adam beta1
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  double epsilon = 1e-8;
};

/**
 * @brief One update of an explicit parameter list. Parameters not in the
 * list are never touched, not even by weight decay.
 */
template <class T>
void optimizer_step(const std::vector<Param<T>*>& params, const OptimizerConfig& cfg, double lr_scale = 1.0) {
  const T lr = static_cast<T>(cfg.learning_rate * lr_scale);
  const T mu = static_cast<T>(cfg.momentum);
  const T wd = static_cast<T>(cfg.weight_decay);
  for (auto* p : params) {
    ++p->steps;
    if (cfg.kind == OptimizerKind::kSgd) {
      p->velocity = mu * p->velocity + p->grad + wd * p->value;
      p->value -= lr * p->velocity;
    } else {
      const T b2 = static_cast<T>(cfg.beta2);
      const MatR<T> g = p->grad + wd * p->value;
      p->velocity = mu * p->velocity + (T(1) - mu) * g;
      p->second_moment = b2 * p->second_moment + (T(1) - b2) * g.cwiseProduct(g);
      const T c1 = T(1) - static_cast<T>(std::pow(cfg.momentum, static_cast<double>(p->steps)));
      const T c2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(p->steps)));
      const T eps = static_cast<T>(cfg.epsilon);
      p->value.array() -= lr * (p->velocity.array() / c1) / ((p->second_moment.array() / c2).sqrt() + eps);
    }
  }
}

template <class T>
void zero_grads(const std::vector<Param<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

template <class T>
void scale_grads(const std::vector<Param<T>*>& params, T factor) {
  for (auto* p : params) p->grad *= factor;
}

}  // namespace ccad
