#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ccad/acquisition.hpp"
#include "ccad/dataset.hpp"
#include "ccad/detector.hpp"
#include "ccad/losses.hpp"
#include "ccad/optim.hpp"

namespace ccad {

enum class PhaseSchedule { kSequential, kInterleaved };

/**
 * @brief Every knob of one active-learning run. Defaults are the desk-scale
 * protocol: lambda = 1, N = 3, gamma = 1, Z = 50, 5% initial pool.
 */
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string dataset_dir = "data";
  Strategy strategy = Strategy::kCommittee;
  bool fpil = true;  // weight the unlabeled discrepancy by (1 - w_b)^gamma
  double initial_fraction = 0.05;
  int budget_per_cycle = 25;
  int num_cycles = 6;
  int committee_size = 3;
  int top_z = 50;
  double lambda = 1.0;
  double gamma_fpil = 1.0;
  bool selection_weighted = false;
  int epochs_labeled = 20;
  int epochs_unlabeled = 4;
  int min_labeled_iterations = 600;
  int batch_size = 8;
  int warmup_iterations = 50;
  OptimizerConfig optimizer{OptimizerKind::kAdam, 1e-3, 0.9, 0.999, 1e-4, 1e-8};
  FocalParams focal{0.25, 2.0, FocalNormalization::kPositives};
  DetectorConfig detector;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  bool warm_start = false;
  PhaseSchedule phase_schedule = PhaseSchedule::kSequential;

  std::string strategy_label() const {
    if (strategy == Strategy::kCommittee && !fpil) return "committee-nofpil";
    return to_string(strategy);
  }

  bool uses_committee() const { return strategy == Strategy::kCommittee; }

  void validate() const {
    if (!(initial_fraction > 0 && initial_fraction < 1)) throw ConfigError("initial_fraction must be in (0,1)");
    if (budget_per_cycle <= 0) throw ConfigError("budget_per_cycle must be positive");
    if (num_cycles < 0) throw ConfigError("num_cycles must be >= 0");
    if (uses_committee() && committee_size < 2) throw ConfigError("committee strategy needs committee_size >= 2");
    if (top_z < 1) throw ConfigError("top_z must be >= 1");
    if (!(lambda > 0)) throw ConfigError("lambda must be positive");
    if (!(gamma_fpil > 0)) throw ConfigError("gamma_fpil must be positive");
    if (epochs_labeled < 0 || epochs_unlabeled < 0 || min_labeled_iterations < 0)
      throw ConfigError("epoch counts must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(optimizer.learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (!(score_threshold > 0 && score_threshold < 1) || !(nms_iou > 0 && nms_iou < 1))
      throw ConfigError("score_threshold and nms_iou must be in (0,1)");
    detector.validate();
  }
};

// ---- JSON ---------------------------------------------------------------

inline void to_json(json& j, const AnchorLevel& l) {
  j = json{{"stride", l.stride}, {"base_size", l.base_size}, {"scales", l.scales}, {"aspect_ratios", l.aspect_ratios}};
}
inline void from_json(const json& j, AnchorLevel& l) {
  l.stride = j.at("stride").get<int>();
  l.base_size = j.at("base_size").get<double>();
  l.scales = j.value("scales", std::vector<double>{1.0});
  l.aspect_ratios = j.value("aspect_ratios", std::vector<double>{1.0});
}

inline void to_json(json& j, const AnchorConfig& a) {
  j = json{{"levels", a.levels}, {"positive_iou", a.positive_iou}, {"negative_iou", a.negative_iou}};
}
inline void from_json(const json& j, AnchorConfig& a) {
  AnchorConfig d;
  if (j.contains("levels")) d.levels = j.at("levels").get<std::vector<AnchorLevel>>();
  d.positive_iou = j.value("positive_iou", d.positive_iou);
  d.negative_iou = j.value("negative_iou", d.negative_iou);
  a = d;
}

inline void to_json(json& j, const DetectorConfig& c) {
  j = json{{"image_size", c.image_size}, {"in_channels", c.in_channels},
           {"num_classes", c.num_classes}, {"widths", c.widths},
           {"committee_size", c.committee_size}, {"prior_probability", c.prior_probability},
           {"anchors", c.anchors}};
}
inline void from_json(const json& j, DetectorConfig& c) {
  DetectorConfig d;
  d.image_size = j.value("image_size", d.image_size);
  d.in_channels = j.value("in_channels", d.in_channels);
  d.num_classes = j.value("num_classes", d.num_classes);
  d.widths = j.value("widths", d.widths);
  d.committee_size = j.value("committee_size", d.committee_size);
  d.prior_probability = j.value("prior_probability", d.prior_probability);
  if (j.contains("anchors")) d.anchors = j.at("anchors").get<AnchorConfig>();
  c = d;
}

inline void to_json(json& j, const OptimizerConfig& o) {
  j = json{{"kind", to_string(o.kind)},        {"learning_rate", o.learning_rate}, {"momentum", o.momentum},
           {"beta2", o.beta2},                 {"weight_decay", o.weight_decay},   {"epsilon", o.epsilon}};
}
inline void from_json(const json& j, OptimizerConfig& o) {
  OptimizerConfig d = o;
  if (j.contains("kind")) d.kind = parse_optimizer(j.at("kind").get<std::string>());
  d.learning_rate = j.value("learning_rate", d.learning_rate);
  d.momentum = j.value("momentum", d.momentum);
  d.beta2 = j.value("beta2", d.beta2);
  d.weight_decay = j.value("weight_decay", d.weight_decay);
  d.epsilon = j.value("epsilon", d.epsilon);
  o = d;
}

inline std::string to_string(FocalNormalization n) {
  return n == FocalNormalization::kPositives ? "positives" : "non_ignored";
}
inline FocalNormalization parse_focal_normalization(const std::string& s) {
  if (s == "positives") return FocalNormalization::kPositives;
  if (s == "non_ignored") return FocalNormalization::kNonIgnored;
  throw ConfigError("unknown focal normalization: " + s);
}

inline std::string to_string(PhaseSchedule p) { return p == PhaseSchedule::kSequential ? "sequential" : "interleaved"; }
inline PhaseSchedule parse_phase_schedule(const std::string& s) {
  if (s == "sequential") return PhaseSchedule::kSequential;
  if (s == "interleaved") return PhaseSchedule::kInterleaved;
  throw ConfigError("unknown phase schedule: " + s);
}

inline void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"seed", c.seed},
           {"dataset_dir", c.dataset_dir},
           {"strategy", to_string(c.strategy)},
           {"fpil", c.fpil},
           {"initial_fraction", c.initial_fraction},
           {"budget_per_cycle", c.budget_per_cycle},
           {"num_cycles", c.num_cycles},
           {"committee_size", c.committee_size},
           {"top_z", c.top_z},
           {"lambda", c.lambda},
           {"gamma_fpil", c.gamma_fpil},
           {"selection_weighted", c.selection_weighted},
           {"epochs_labeled", c.epochs_labeled},
           {"epochs_unlabeled", c.epochs_unlabeled},
           {"min_labeled_iterations", c.min_labeled_iterations},
           {"batch_size", c.batch_size},
           {"warmup_iterations", c.warmup_iterations},
           {"optimizer", c.optimizer},
           {"focal", {{"alpha", c.focal.alpha}, {"gamma", c.focal.gamma}, {"normalization", to_string(c.focal.normalization)}}},
           {"detector", c.detector},
           {"score_threshold", c.score_threshold},
           {"nms_iou", c.nms_iou},
           {"warm_start", c.warm_start},
           {"phase_schedule", to_string(c.phase_schedule)}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  d.seed = j.value("seed", d.seed);
  d.dataset_dir = j.value("dataset_dir", d.dataset_dir);
  if (j.contains("strategy")) {
    const auto s = j.at("strategy").get<std::string>();
    if (s == "committee-nofpil") {
      d.strategy = Strategy::kCommittee;
      d.fpil = false;
    } else {
      d.strategy = parse_strategy(s);
    }
  }
  d.fpil = j.value("fpil", d.fpil);
  d.initial_fraction = j.value("initial_fraction", d.initial_fraction);
  d.budget_per_cycle = j.value("budget_per_cycle", d.budget_per_cycle);
  d.num_cycles = j.value("num_cycles", d.num_cycles);
  d.committee_size = j.value("committee_size", d.committee_size);
  d.top_z = j.value("top_z", d.top_z);
  d.lambda = j.value("lambda", d.lambda);
  d.gamma_fpil = j.value("gamma_fpil", d.gamma_fpil);
  d.selection_weighted = j.value("selection_weighted", d.selection_weighted);
  d.epochs_labeled = j.value("epochs_labeled", d.epochs_labeled);
  d.epochs_unlabeled = j.value("epochs_unlabeled", d.epochs_unlabeled);
  d.min_labeled_iterations = j.value("min_labeled_iterations", d.min_labeled_iterations);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.warmup_iterations = j.value("warmup_iterations", d.warmup_iterations);
  if (j.contains("optimizer")) from_json(j.at("optimizer"), d.optimizer);
  if (j.contains("focal")) {
    const auto& f = j.at("focal");
    d.focal.alpha = f.value("alpha", d.focal.alpha);
    d.focal.gamma = f.value("gamma", d.focal.gamma);
    if (f.contains("normalization"))
      d.focal.normalization = parse_focal_normalization(f.at("normalization").get<std::string>());
  }
  if (j.contains("detector")) d.detector = j.at("detector").get<DetectorConfig>();
  d.score_threshold = j.value("score_threshold", d.score_threshold);
  d.nms_iou = j.value("nms_iou", d.nms_iou);
  d.warm_start = j.value("warm_start", d.warm_start);
  if (j.contains("phase_schedule")) d.phase_schedule = parse_phase_schedule(j.at("phase_schedule").get<std::string>());
  // The committee size lives in both blocks; the top-level key wins.
  d.detector.committee_size = d.committee_size;
  c = d;
}

/// FNV-1a over the canonical (key-sorted, compact) JSON text, as 16 hex digits.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return config_hash(json(c)); }

inline json read_json_file(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in " + p.string() + ": " + e.what());
  }
}

}  // namespace ccad
