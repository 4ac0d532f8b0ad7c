#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccad/acquisition.hpp"
#include "ccad/checkpoint.hpp"
#include "ccad/config.hpp"
#include "ccad/dataset.hpp"
#include "ccad/detector.hpp"
#include "ccad/eval.hpp"
#include "ccad/losses.hpp"
#include "ccad/optim.hpp"
#include "ccad/pool.hpp"

namespace ccad {

/// Raised when a training loss stops being finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when selection is requested from an empty unlabeled pool.
struct PoolExhaustedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Model = Detector<float>;

struct LossLogEntry {
  int cycle = 0;
  int step = 0;
  std::string phase;  // "labeled" or "unlabeled"
  LossBreakdown loss;
};

/// Committee diagnostics on held-out images (committee strategies only).
struct CommitteeDiagnostics {
  double d_img_after_labeled = 0;    // mean unweighted image discrepancy after the labeled phase
  double d_img_after_unlabeled = 0;  // ... and after the unlabeled phase
  double background_to_positive = 0; // mean D_ins on background anchors / mean D_ins on positive anchors
};

struct CycleRecord {
  int cycle_index = 0;
  int labeled_count = 0;
  double map_50 = 0;
  std::map<int, double> per_class_ap;
  std::vector<ImageId> selected_ids;  // images added to the labeled pool entering this cycle
  long true_positive_instances_selected = 0;
  double wall_clock_seconds = 0;
  std::string loss_curve_ref;
  std::optional<CommitteeDiagnostics> committee;

  /// Equality on everything except timing.
  bool same_outcome(const CycleRecord& o) const {
    auto diag_eq = [](const std::optional<CommitteeDiagnostics>& a, const std::optional<CommitteeDiagnostics>& b) {
      if (a.has_value() != b.has_value()) return false;
      if (!a) return true;
      return a->d_img_after_labeled == b->d_img_after_labeled && a->d_img_after_unlabeled == b->d_img_after_unlabeled &&
             a->background_to_positive == b->background_to_positive;
    };
    return cycle_index == o.cycle_index && labeled_count == o.labeled_count && map_50 == o.map_50 &&
           per_class_ap == o.per_class_ap && selected_ids == o.selected_ids &&
           true_positive_instances_selected == o.true_positive_instances_selected && diag_eq(committee, o.committee);
  }
};

inline void to_json(json& j, const CycleRecord& r) {
  json ap = json::object();
  for (const auto& [c, v] : r.per_class_ap) ap[std::to_string(c)] = v;
  j = json{{"cycle_index", r.cycle_index},
           {"labeled_count", r.labeled_count},
           {"map_50", r.map_50},
           {"per_class_ap", ap},
           {"selected_ids", r.selected_ids},
           {"true_positive_instances_selected", r.true_positive_instances_selected},
           {"wall_clock_seconds", r.wall_clock_seconds},
           {"loss_curve_ref", r.loss_curve_ref}};
  if (r.committee)
    j["committee"] = {{"d_img_after_labeled", r.committee->d_img_after_labeled},
                      {"d_img_after_unlabeled", r.committee->d_img_after_unlabeled},
                      {"background_to_positive", r.committee->background_to_positive}};
}

inline void from_json(const json& j, CycleRecord& r) {
  r.cycle_index = j.at("cycle_index").get<int>();
  r.labeled_count = j.at("labeled_count").get<int>();
  r.map_50 = j.at("map_50").get<double>();
  r.per_class_ap.clear();
  for (const auto& [k, v] : j.at("per_class_ap").items()) r.per_class_ap[std::stoi(k)] = v.get<double>();
  r.selected_ids = j.at("selected_ids").get<std::vector<ImageId>>();
  r.true_positive_instances_selected = j.at("true_positive_instances_selected").get<long>();
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  r.loss_curve_ref = j.value("loss_curve_ref", std::string());
  if (j.contains("committee")) {
    const auto& c = j.at("committee");
    r.committee = CommitteeDiagnostics{c.at("d_img_after_labeled").get<double>(),
                                       c.at("d_img_after_unlabeled").get<double>(),
                                       c.at("background_to_positive").get<double>()};
  } else {
    r.committee.reset();
  }
}

/**
 * @brief Per-experiment state that does not change across cycles: the
 * dataset, its anchor targets, and a fixed held-out batch for diagnostics.
 */
class ExperimentContext {
 public:
  ExperimentContext(const Dataset& ds, const ExperimentConfig& cfg) : ds_(ds), cfg_(cfg) {
    cfg_.validate();
    if (cfg_.detector.image_size != ds.generator.image_size || cfg_.detector.in_channels != ds.generator.channels ||
        cfg_.detector.num_classes != ds.generator.num_classes)
      throw ConfigError("detector config does not match the dataset (size, channels or classes)");
    grid_ = build_anchors(cfg_.detector.image_size, cfg_.detector.anchors);
    targets_.reserve(ds.samples.size());
    for (const auto& s : ds.samples)
      targets_.push_back(match_targets(grid_, s.annotations, cfg_.detector.num_classes, cfg_.detector.anchors));
    for (std::size_t i = 0; i < std::min<std::size_t>(16, ds.test_ids.size()); ++i) heldout_.push_back(ds.test_ids[i]);
  }

  const Dataset& dataset() const { return ds_; }
  const ExperimentConfig& config() const { return cfg_; }
  const AnchorGrid& anchors() const { return grid_; }
  const InstanceTargets& targets(ImageId id) const { return targets_.at(static_cast<std::size_t>(id)); }
  const std::vector<ImageId>& heldout_batch() const { return heldout_; }

 private:
  const Dataset& ds_;
  ExperimentConfig cfg_;
  AnchorGrid grid_;
  std::vector<InstanceTargets> targets_;
  std::vector<ImageId> heldout_;
};

/// Observation points inside a training cycle (used by tests and diagnostics).
struct TrainHooks {
  std::function<void(Model&)> after_labeled_phase;
  std::function<void(Model&)> after_unlabeled_phase;
};

struct TrainResult {
  std::vector<LossLogEntry> log;
  int labeled_iterations = 0;
  int unlabeled_iterations = 0;
};

namespace detail {

inline void check_finite(double v, const LossLogEntry& e) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite loss in cycle " << e.cycle << ", " << e.phase << " step " << e.step << ": l_main=" << e.loss.l_main
       << " l_com=" << e.loss.l_com << " d_com=" << e.loss.d_com;
    throw DivergenceError(os.str());
  }
}

/// Endless epoch-wise shuffled stream of ids.
class BatchStream {
 public:
  BatchStream(std::vector<ImageId> ids, std::uint64_t seed) : ids_(std::move(ids)), rng_(seed) { reshuffle(); }
  std::vector<ImageId> next(int batch) {
    std::vector<ImageId> out;
    while (static_cast<int>(out.size()) < batch && !ids_.empty()) {
      if (pos_ == ids_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_ = ids_;
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<ImageId> ids_, order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

inline int iterations_for(int epochs, std::size_t n, int batch, int floor_iterations) {
  if (epochs <= 0 || n == 0) return 0;
  const int per_epoch = static_cast<int>((n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
  return std::max(epochs * per_epoch, floor_iterations);
}

/// Cached inputs for committee updates while the backbone is frozen.
struct FrozenInstance {
  HeadInputs<float> heads;
  MatR<float> main_cls;
};

inline FrozenInstance freeze(const Model& model, const SyntheticSample& s) {
  const auto bb = model.backbone_forward(s.image);
  FrozenInstance f;
  f.heads = model.head_inputs(bb);
  f.main_cls = softmax_rows(model.main_cls_logits(f.heads));
  return f;
}

/// One committee-only ascent step on the (weighted) discrepancy of a batch.
inline double unlabeled_step(Model& model, const std::vector<const FrozenInstance*>& batch, const ExperimentConfig& cfg) {
  const auto committee = model.committee_params();
  zero_grads(committee);
  double d_sum = 0;
  for (const auto* f : batch) {
    InstancePrediction<float> pred;
    pred.main_cls = f->main_cls;
    pred.committee_cls = model.committee_probs(f->heads);
    std::vector<MatR<float>> g;
    d_sum += image_discrepancy(pred, cfg.fpil, cfg.gamma_fpil, &g);
    // minimise -lambda * D  =>  gradient is -lambda * dD
    const float scale = static_cast<float>(-cfg.lambda / static_cast<double>(batch.size()));
    for (auto& m : g) m *= scale;
    model.backward_committee(f->heads, g);
  }
  optimizer_step(committee, cfg.optimizer);
  return d_sum / static_cast<double>(batch.size());
}

}  // namespace detail

/**
 * @brief One labeled step: L_main updates backbone + main head, L_com
 * updates the committee on detached features. Returns (l_main, l_com).
 */
inline std::pair<double, double> labeled_step(Model& model, const ExperimentContext& ctx,
                                              const std::vector<ImageId>& batch, bool train_committee,
                                              double lr_scale) {
  const auto& cfg = ctx.config();
  auto params = model.backbone_params();
  for (auto* p : model.main_head_params()) params.push_back(p);
  if (train_committee)
    for (auto* p : model.committee_params()) params.push_back(p);
  zero_grads(params);
  double lm = 0, lc = 0;
  for (ImageId id : batch) {
    const auto& sample = ctx.dataset().get(id);
    ForwardTrace<float> tr;
    tr.backbone = model.backbone_forward(sample.image);
    tr.heads = model.head_inputs(tr.backbone);
    tr.pred.main_cls = softmax_rows(model.main_cls_logits(tr.heads));
    tr.pred.main_loc = model.main_loc_output(tr.heads);
    MainLossGrad<float> mg;
    lm += static_cast<double>(main_loss(tr.pred, ctx.targets(id), cfg.focal, &mg));
    model.backward_main(tr, mg.cls_logits, mg.loc);
    if (train_committee) {
      tr.pred.committee_cls = model.committee_probs(tr.heads);
      std::vector<MatR<float>> cg;
      lc += static_cast<double>(committee_supervised_loss(tr.pred, ctx.targets(id), cfg.focal, &cg));
      model.backward_committee(tr.heads, cg);
    }
  }
  scale_grads(params, 1.0f / static_cast<float>(batch.size()));
  optimizer_step(params, cfg.optimizer, lr_scale);
  return {lm / static_cast<double>(batch.size()), lc / static_cast<double>(batch.size())};
}

/**
 * @brief Trains one cycle: a labeled phase (L_main + L_com) followed by an
 * unlabeled phase that only moves the committee, maximising lambda * D.
 *
 * Baseline strategies skip everything committee-related; the main detector
 * is unaffected by that because no committee gradient reaches it.
 */
inline TrainResult train_cycle(Model& model, const PoolState& pool, const ExperimentContext& ctx, int cycle,
                               const TrainHooks* hooks = nullptr) {
  const auto& cfg = ctx.config();
  if (pool.labeled_ids.empty()) throw ConfigError("cannot train on an empty labeled pool");
  if (!model.initialized()) throw UsageError("model must be initialized before training");
  const bool committee = cfg.uses_committee();
  TrainResult result;

  const int labeled_iters =
      detail::iterations_for(cfg.epochs_labeled, pool.labeled_ids.size(), cfg.batch_size, cfg.min_labeled_iterations);
  const int unlabeled_iters = committee ? detail::iterations_for(cfg.epochs_unlabeled, pool.unlabeled_ids.size(),
                                                                 cfg.batch_size, 0)
                                        : 0;
  result.labeled_iterations = labeled_iters;
  result.unlabeled_iterations = unlabeled_iters;

  detail::BatchStream labeled(pool.labeled_ids,
                              derive_seed(cfg.seed, {tag(Stream::kShuffleLabeled), static_cast<std::uint64_t>(cycle)}));
  detail::BatchStream unlabeled(
      pool.unlabeled_ids, derive_seed(cfg.seed, {tag(Stream::kShuffleUnlabeled), static_cast<std::uint64_t>(cycle)}));

  auto log_labeled = [&](int step, double lm, double lc) {
    LossLogEntry e{cycle, step, "labeled", assemble_total(lm, lc, 0.0, cfg.lambda, cfg.gamma_fpil)};
    detail::check_finite(e.loss.total, e);
    result.log.push_back(e);
  };
  auto log_unlabeled = [&](int step, double d) {
    LossLogEntry e{cycle, step, "unlabeled", assemble_total(0.0, 0.0, d, cfg.lambda, cfg.gamma_fpil)};
    detail::check_finite(e.loss.total, e);
    result.log.push_back(e);
  };
  auto warmup = [&](int it) {
    return cfg.warmup_iterations > 0 ? std::min(1.0, (it + 1) / static_cast<double>(cfg.warmup_iterations)) : 1.0;
  };

  if (cfg.phase_schedule == PhaseSchedule::kSequential || !committee) {
    for (int it = 0; it < labeled_iters; ++it) {
      const auto [lm, lc] = labeled_step(model, ctx, labeled.next(cfg.batch_size), committee, warmup(it));
      log_labeled(it, lm, lc);
    }
    if (hooks && hooks->after_labeled_phase) hooks->after_labeled_phase(model);
    if (unlabeled_iters > 0) {
      // The backbone and main head are frozen from here on, so features and
      // background scores are computed once per unlabeled image.
      std::map<ImageId, detail::FrozenInstance> frozen;
      for (ImageId id : pool.unlabeled_ids) frozen.emplace(id, detail::freeze(model, ctx.dataset().get(id)));
      for (int it = 0; it < unlabeled_iters; ++it) {
        std::vector<const detail::FrozenInstance*> batch;
        for (ImageId id : unlabeled.next(cfg.batch_size)) batch.push_back(&frozen.at(id));
        log_unlabeled(it, detail::unlabeled_step(model, batch, cfg));
      }
    }
  } else {
    // Interleaved: spread the unlabeled steps evenly between labeled steps.
    if (hooks && hooks->after_labeled_phase) throw UsageError("phase hooks require the sequential schedule");
    int done_unlabeled = 0;
    for (int it = 0; it < labeled_iters; ++it) {
      const auto [lm, lc] = labeled_step(model, ctx, labeled.next(cfg.batch_size), committee, warmup(it));
      log_labeled(it, lm, lc);
      const int target = static_cast<int>(static_cast<long>(it + 1) * unlabeled_iters / std::max(labeled_iters, 1));
      for (; done_unlabeled < target; ++done_unlabeled) {
        std::vector<detail::FrozenInstance> fresh;
        for (ImageId id : unlabeled.next(cfg.batch_size)) fresh.push_back(detail::freeze(model, ctx.dataset().get(id)));
        std::vector<const detail::FrozenInstance*> batch;
        for (const auto& f : fresh) batch.push_back(&f);
        log_unlabeled(done_unlabeled, detail::unlabeled_step(model, batch, cfg));
      }
    }
  }
  if (hooks && hooks->after_unlabeled_phase) hooks->after_unlabeled_phase(model);
  return result;
}

/// Main-detector mAP@0.5 over the given images.
inline EvalResult evaluate_model(const Model& model, const Dataset& ds, const std::vector<ImageId>& ids,
                                 double score_threshold = 0.05, double nms_iou = 0.5) {
  std::vector<ImageDetection> preds;
  std::vector<GroundTruthBox> gts;
  for (ImageId id : ids) {
    const auto& s = ds.get(id);
    for (const auto& d : predict(model, s.image, score_threshold, nms_iou)) preds.push_back({id, d});
    for (const auto& a : s.annotations) gts.push_back({id, a.class_id, a.box});
  }
  return evaluate_map(preds, gts, 0.5);
}

/// Mean unweighted image discrepancy over a batch of images.
inline double mean_image_discrepancy(const Model& model, const Dataset& ds, const std::vector<ImageId>& ids) {
  double sum = 0;
  for (ImageId id : ids) sum += image_discrepancy(model.forward(ds.get(id).image), false);
  return ids.empty() ? 0.0 : sum / static_cast<double>(ids.size());
}

/**
 * @brief Mean D_ins over background anchors divided by mean D_ins over
 * positive anchors, pooled over the given images.
 */
inline double background_to_positive_discrepancy(const Model& model, const ExperimentContext& ctx,
                                                 const std::vector<ImageId>& ids) {
  double bg_sum = 0, pos_sum = 0;
  std::size_t bg_n = 0, pos_n = 0;
  for (ImageId id : ids) {
    const auto d = instance_discrepancies(model.forward(ctx.dataset().get(id).image));
    const auto& t = ctx.targets(id);
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (t.positive_mask[j]) {
        pos_sum += d[j];
        ++pos_n;
      } else if (!t.ignore_mask[j]) {
        bg_sum += d[j];
        ++bg_n;
      }
    }
  }
  if (pos_n == 0 || bg_n == 0 || pos_sum == 0) return 0.0;
  return (bg_sum / static_cast<double>(bg_n)) / (pos_sum / static_cast<double>(pos_n));
}

/// Positive anchors (under the matching rule) inside the given images.
inline long count_true_positive_instances(const std::vector<ImageId>& selected_ids, const ExperimentContext& ctx) {
  long n = 0;
  for (ImageId id : selected_ids) n += static_cast<long>(ctx.targets(id).num_positive());
  return n;
}

inline long count_true_positive_instances(const std::vector<ImageId>& selected_ids, const Dataset& ds,
                                          const AnchorGrid& anchors, int num_classes,
                                          const AnchorConfig& anchor_cfg = {}) {
  long n = 0;
  for (ImageId id : selected_ids)
    n += static_cast<long>(match_targets(anchors, ds.get(id).annotations, num_classes, anchor_cfg).num_positive());
  return n;
}

/**
 * @brief Scores every unlabeled image (ascending id order) and picks the
 * budget best; ties go to the smaller image id.
 */
inline SelectionResult select(Strategy strategy, const Model& model, const ExperimentContext& ctx,
                              const PoolState& pool, int budget, int cycle) {
  const auto& cfg = ctx.config();
  const auto& ds = ctx.dataset();
  if (pool.unlabeled_ids.empty()) throw PoolExhaustedError("unlabeled pool is exhausted");
  const auto take = static_cast<std::size_t>(std::max(budget, 0));
  SelectionResult r;
  r.strategy_name = to_string(strategy);
  switch (strategy) {
    case Strategy::kCommittee:
      for (ImageId id : pool.unlabeled_ids)
        r.all_scores.push_back(score_image_committee(model.forward(ds.get(id).image), cfg.top_z, id,
                                                     cfg.selection_weighted, cfg.gamma_fpil));
      r.selected_ids = select_top(r.all_scores, take);
      break;
    case Strategy::kEntropy:
      for (ImageId id : pool.unlabeled_ids)
        r.all_scores.push_back(score_image_entropy(model.forward(ds.get(id).image), id));
      r.selected_ids = select_top(r.all_scores, take);
      break;
    case Strategy::kRandom: {
      std::vector<ImageId> ids = pool.unlabeled_ids;
      Rng rng(derive_seed(cfg.seed, {tag(Stream::kRandomSelect), static_cast<std::uint64_t>(cycle)}));
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(std::min(take, ids.size()));
      r.selected_ids = ids;
      break;
    }
    case Strategy::kCoreSet: {
      std::vector<VecX<double>> labeled;
      for (ImageId id : pool.labeled_ids) labeled.push_back(model.pooled_feature(ds.get(id).image));
      std::vector<std::pair<ImageId, VecX<double>>> unlabeled;
      for (ImageId id : pool.unlabeled_ids) unlabeled.push_back({id, model.pooled_feature(ds.get(id).image)});
      r.selected_ids = select_core_set(labeled, unlabeled, take).selected_ids;
      break;
    }
  }
  return r;
}

// ---- run directory --------------------------------------------------------

inline void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + tmp.string());
    os << content;
  }
  fs::rename(tmp, path);
}

inline std::vector<CycleRecord> read_cycle_records(const fs::path& path) {
  std::vector<CycleRecord> out;
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<CycleRecord>());
    } catch (const json::exception&) {
      break;  // a torn trailing line is ignored
    }
  }
  return out;
}

/// Rewrites the records file with one more line via rename, so readers never see a partial record.
inline void append_cycle_record(const fs::path& path, const CycleRecord& r) {
  std::string content;
  if (fs::exists(path)) {
    std::ifstream is(path, std::ios::binary);
    content.assign(std::istreambuf_iterator<char>(is), {});
  }
  content += json(r).dump() + "\n";
  write_file_atomic(path, content);
}

inline void write_loss_log(const fs::path& path, const std::vector<LossLogEntry>& log) {
  std::ostringstream os;
  for (const auto& e : log)
    os << json{{"cycle", e.cycle},          {"step", e.step},         {"phase", e.phase},
               {"l_main", e.loss.l_main},   {"l_com", e.loss.l_com},  {"d_com", e.loss.d_com},
               {"total", e.loss.total}}
              .dump()
       << '\n';
  write_file_atomic(path, os.str());
}

/// Score dump lines: cycle, strategy, image_id, score, top-5 instance scores; sorted by descending score.
inline std::string format_score_dump(int cycle, const std::string& strategy, std::vector<ImageScore> scores) {
  std::stable_sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.image_id < b.image_id;
  });
  std::ostringstream os;
  for (const auto& s : scores) {
    json top = json::array();
    for (std::size_t i = 0; i < std::min<std::size_t>(5, s.top_instances.size()); ++i)
      top.push_back(s.top_instances[i].score);
    os << json{{"cycle", cycle}, {"strategy", strategy}, {"image_id", s.image_id}, {"score", s.score}, {"top5", top}}
              .dump()
       << '\n';
  }
  return os.str();
}

struct RunOptions {
  bool resume = false;
  std::optional<int> stop_after_cycle;  // simulate an interruption after this cycle
  bool write_checkpoints = true;
};

inline fs::path checkpoint_path(const fs::path& run_dir, int cycle) {
  return run_dir / "checkpoints" / ("cycle_" + std::to_string(cycle) + ".ckpt");
}

inline Checkpoint make_checkpoint(const Model& model, const ExperimentConfig& cfg, int cycle) {
  Checkpoint ck;
  ck.cycle_index = static_cast<std::uint32_t>(cycle);
  ck.meta = {{"config", cfg}, {"config_hash", config_hash(cfg)}, {"cycle_index", cycle}};
  ck.arrays = export_parameters(model);
  return ck;
}

inline SelectionResult read_selection(const fs::path& p) {
  const json j = read_json_file(p);
  SelectionResult r;
  r.strategy_name = j.at("strategy").get<std::string>();
  r.selected_ids = j.at("selected_ids").get<std::vector<ImageId>>();
  return r;
}

/**
 * @brief The full active-learning loop for one strategy and seed.
 *
 * Cycle p trains on the current pool, evaluates on the test split, writes
 * its record, then (for p < num_cycles) selects and promotes the next
 * batch. Record p lists the images that entered the pool at p, so cycle 0
 * is identical for every strategy. With a run directory the loop is
 * resumable from the last completed cycle.
 */
inline std::vector<CycleRecord> run_experiment(const ExperimentConfig& cfg, const Dataset& ds,
                                               const std::optional<fs::path>& run_dir = std::nullopt,
                                               const RunOptions& opts = {}) {
  const ExperimentContext ctx(ds, cfg);
  const std::string hash = config_hash(cfg);
  const std::string label = cfg.strategy_label();

  std::vector<CycleRecord> records;
  fs::path records_path;
  if (run_dir) {
    fs::create_directories(*run_dir / "checkpoints");
    records_path = *run_dir / "cycle_records.jsonl";
    const fs::path snapshot = *run_dir / "config.json";
    if (opts.resume && fs::exists(snapshot)) {
      const json old = read_json_file(snapshot);
      if (old.value("config_hash", std::string()) != hash)
        throw ConfigError("refusing to resume " + run_dir->string() + ": config hash " +
                          old.value("config_hash", std::string("?")) + " does not match " + hash);
      records = read_cycle_records(records_path);
    } else if (!opts.resume && fs::exists(records_path) && !read_cycle_records(records_path).empty()) {
      throw ConfigError("run directory " + run_dir->string() + " already has records; resume or remove it");
    }
    write_file_atomic(snapshot, json{{"config", cfg}, {"config_hash", hash}}.dump(2) + "\n");
  }

  PoolState pool = init_pool(ds.train_ids, cfg.initial_fraction, cfg.budget_per_cycle, cfg.seed);
  // Replay completed cycles.
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].cycle_index != static_cast<int>(i)) throw InvariantError("cycle records are out of order");
    if (i > 0) pool = promote(pool, records[i].selected_ids);
    if (static_cast<int>(pool.labeled_ids.size()) != records[i].labeled_count)
      throw InvariantError("cycle record labeled_count disagrees with the pool replay");
  }
  pool.check();

  std::optional<Model> model;
  std::vector<ImageId> pending_selection;
  const int start = static_cast<int>(records.size());
  if (start > cfg.num_cycles) return records;
  if (start > 0) {
    // The selection made at the end of the last completed cycle.
    const int last = start - 1;
    const fs::path sel_path = *run_dir / ("selection_cycle_" + std::to_string(last) + ".json");
    if (fs::exists(sel_path)) {
      pending_selection = read_selection(sel_path).selected_ids;
    } else {
      model.emplace(cfg.detector);
      import_parameters(*model, read_checkpoint(checkpoint_path(*run_dir, last)).arrays);
      pending_selection = select(cfg.strategy, *model, ctx, pool, cfg.budget_per_cycle, last).selected_ids;
    }
    if (cfg.warm_start && !model) {
      model.emplace(cfg.detector);
      import_parameters(*model, read_checkpoint(checkpoint_path(*run_dir, last)).arrays);
    }
  }

  for (int p = start; p <= cfg.num_cycles; ++p) {
    const auto t0 = std::chrono::steady_clock::now();
    CycleRecord rec;
    rec.cycle_index = p;
    if (p > 0) {
      pool = promote(pool, pending_selection);
      pool.check();
      rec.selected_ids = pending_selection;
      rec.true_positive_instances_selected = count_true_positive_instances(pending_selection, ctx);
    }
    rec.labeled_count = static_cast<int>(pool.labeled_ids.size());

    if (!model || !cfg.warm_start) {
      model.emplace(cfg.detector);
      model->initialize(derive_seed(cfg.seed, {0xC7C1Eull, static_cast<std::uint64_t>(p)}));
    }

    CommitteeDiagnostics diag;
    TrainHooks hooks;
    const bool committee = cfg.uses_committee();
    if (committee) {
      hooks.after_labeled_phase = [&](Model& m) {
        diag.d_img_after_labeled = mean_image_discrepancy(m, ds, ctx.heldout_batch());
      };
      hooks.after_unlabeled_phase = [&](Model& m) {
        diag.d_img_after_unlabeled = mean_image_discrepancy(m, ds, ctx.heldout_batch());
        diag.background_to_positive = background_to_positive_discrepancy(m, ctx, ctx.heldout_batch());
      };
      if (cfg.phase_schedule == PhaseSchedule::kInterleaved) hooks.after_labeled_phase = nullptr;
    }
    const TrainResult tr = train_cycle(*model, pool, ctx, p, committee ? &hooks : nullptr);

    const EvalResult ev = evaluate_model(*model, ds, ds.test_ids, cfg.score_threshold, cfg.nms_iou);
    rec.map_50 = ev.map_50;
    rec.per_class_ap = ev.per_class_ap;
    if (committee) rec.committee = diag;

    SelectionResult sel;
    if (p < cfg.num_cycles && !pool.unlabeled_ids.empty())
      sel = select(cfg.strategy, *model, ctx, pool, cfg.budget_per_cycle, p);

    rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (run_dir) {
      const fs::path loss_path = *run_dir / ("loss_cycle_" + std::to_string(p) + ".jsonl");
      write_loss_log(loss_path, tr.log);
      rec.loss_curve_ref = loss_path.filename().string();
      if (opts.write_checkpoints) write_checkpoint(checkpoint_path(*run_dir, p), make_checkpoint(*model, cfg, p));
      if (p < cfg.num_cycles) {
        write_file_atomic(*run_dir / ("scores_cycle_" + std::to_string(p) + ".jsonl"),
                          format_score_dump(p, label, sel.all_scores));
        write_file_atomic(*run_dir / ("selection_cycle_" + std::to_string(p) + ".json"),
                          json{{"strategy", label}, {"cycle", p}, {"selected_ids", sel.selected_ids}}.dump() + "\n");
      }
      append_cycle_record(records_path, rec);
    }
    records.push_back(rec);
    pending_selection = sel.selected_ids;
    if (opts.stop_after_cycle && *opts.stop_after_cycle == p) break;
  }
  return records;
}

}  // namespace ccad
