#pragma once

#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccad/active_loop.hpp"
#include "ccad/report.hpp"

namespace ccad {

/**
 * @brief Config file layout shared by every command.
 *
 * Top-level keys are ExperimentConfig keys; an optional "dataset" block
 * drives `generate`:
 *
 *   { "seed": 0, "strategy": "committee", ...,
 *     "dataset": { "seed": 0, "num_images": 500, "test_fraction": 0.2,
 *                  "generator": { ... } } }
 */
struct DatasetSpec {
  std::uint64_t seed = 0;
  int num_images = 500;
  double test_fraction = 0.2;
  GeneratorConfig generator;
};

inline DatasetSpec dataset_spec_from(const json& root) {
  DatasetSpec d;
  if (!root.contains("dataset")) return d;
  const auto& j = root.at("dataset");
  d.seed = j.value("seed", d.seed);
  d.num_images = j.value("num_images", d.num_images);
  d.test_fraction = j.value("test_fraction", d.test_fraction);
  if (j.contains("generator")) d.generator = j.at("generator").get<GeneratorConfig>();
  if (d.num_images < 2) throw ConfigError("dataset.num_images must be >= 2");
  d.generator.validate();
  return d;
}

inline ExperimentConfig experiment_config_from(const json& root) {
  json j = root;
  j.erase("dataset");
  auto c = j.get<ExperimentConfig>();
  c.validate();
  return c;
}

/// Parses "0,1,2", "0-4" or a mix like "0-2,7".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoull(item));
      } else {
        const auto a = std::stoull(item.substr(0, dash)), b = std::stoull(item.substr(dash + 1));
        if (b < a) throw ConfigError("bad seed range: " + item);
        for (auto s = a; s <= b; ++s) out.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed list: " + text);
    }
  }
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline bool non_empty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

// ---- generate -------------------------------------------------------------

inline Dataset cmd_generate(const json& config, const fs::path& out_dir, bool force) {
  const DatasetSpec spec = dataset_spec_from(config);
  if (non_empty_dir(out_dir)) {
    if (!force) throw ConfigError(out_dir.string() + " exists and is not empty (use --force to overwrite)");
    fs::remove_all(out_dir);
  }
  Dataset d = make_dataset(spec.seed, spec.num_images, spec.generator, spec.test_fraction);
  for (const auto& s : d.samples) {
    const auto problems = validate_sample(s, spec.generator);
    if (!problems.empty()) throw InvariantError("generated image " + std::to_string(s.image_id) + ": " + problems.front());
  }
  save_dataset(d, out_dir);
  return d;
}

// ---- run ------------------------------------------------------------------

struct RunRequest {
  json config;
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> strategies;  // labels; empty means the config's strategy
  fs::path out_dir = "runs";
  bool resume = false;
  bool force = false;
  std::optional<int> stop_after_cycle;  // test hook: simulate an interruption
};

struct RunOutcome {
  json manifest;
  int failures = 0;
};

/// Applies a strategy label ("committee", "committee-nofpil", "random", ...) to a config.
inline ExperimentConfig with_strategy(ExperimentConfig c, const std::string& label) {
  if (label == "committee-nofpil") {
    c.strategy = Strategy::kCommittee;
    c.fpil = false;
  } else {
    c.strategy = parse_strategy(label);
    if (c.strategy == Strategy::kCommittee) c.fpil = true;
  }
  return c;
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", std::gmtime(&t));
  return buf;
}

/**
 * @brief Runs every (strategy, seed) pair into <out>/<label>/seed_<s>/ and
 * keeps <out>/manifest.json current. A failed seed is recorded and the
 * remaining seeds still run.
 */
inline RunOutcome cmd_run(const RunRequest& req, std::ostream& log = std::cerr) {
  const ExperimentConfig base = experiment_config_from(req.config);
  const Dataset ds = load_dataset(base.dataset_dir);
  std::vector<std::string> labels = req.strategies.empty() ? std::vector<std::string>{base.strategy_label()}
                                                           : req.strategies;
  fs::create_directories(req.out_dir);
  const fs::path manifest_path = req.out_dir / "manifest.json";
  json manifest;
  if (fs::exists(manifest_path)) manifest = read_json_file(manifest_path);
  if (!manifest.contains("run_id")) manifest["run_id"] = utc_now();
  manifest["config_hash"] = config_hash(base);
  manifest["dataset_dir"] = base.dataset_dir;
  manifest["strategies"] = labels;
  manifest["seeds"] = req.seeds;
  if (!manifest.contains("runs")) manifest["runs"] = json::object();

  RunOutcome outcome;
  for (const auto& label : labels) {
    for (auto seed : req.seeds) {
      const std::string key = label + "/seed_" + std::to_string(seed);
      const fs::path dir = req.out_dir / label / ("seed_" + std::to_string(seed));
      json& entry = manifest["runs"][key];
      try {
        ExperimentConfig cfg = with_strategy(base, label);
        cfg.seed = seed;
        if (req.force && fs::exists(dir)) fs::remove_all(dir);
        entry = {{"strategy", label}, {"seed", seed}, {"config_hash", config_hash(cfg)}, {"status", "running"},
                 {"path", fs::relative(dir, req.out_dir).generic_string()},
                 {"records", (fs::relative(dir, req.out_dir) / "cycle_records.jsonl").generic_string()}};
        write_file_atomic(manifest_path, manifest.dump(2) + "\n");
        log << "[" << key << "] starting\n";
        RunOptions opts;
        opts.resume = req.resume;
        opts.stop_after_cycle = req.stop_after_cycle;
        const auto recs = run_experiment(cfg, ds, dir, opts);
        for (const auto& r : recs)
          log << "[" << key << "] cycle " << r.cycle_index << " labeled=" << r.labeled_count << " mAP@0.5=" << r.map_50
              << " tp_selected=" << r.true_positive_instances_selected << "\n";
        entry["status"] = static_cast<int>(recs.size()) == cfg.num_cycles + 1 ? "complete" : "partial";
        entry["cycles_completed"] = recs.size();
      } catch (const std::exception& e) {
        ++outcome.failures;
        entry["status"] = "failed";
        entry["error"] = e.what();
        log << "[" << key << "] failed: " << e.what() << "\n";
      }
      write_file_atomic(manifest_path, manifest.dump(2) + "\n");
    }
  }
  outcome.manifest = manifest;
  return outcome;
}

// ---- score-dump -----------------------------------------------------------

/**
 * @brief Scores every image of the dataset with a checkpointed model and
 * returns descending-sorted dump lines. Only score-based strategies apply.
 */
inline std::string cmd_score_dump(const fs::path& checkpoint, const Dataset& ds, const std::string& strategy_label,
                                  const std::optional<ExperimentConfig>& config = std::nullopt) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  if (!ck.meta.contains("config")) throw ConfigError("checkpoint carries no config");
  const auto ck_cfg = ck.meta.at("config").get<ExperimentConfig>();
  if (config && json(config->detector) != json(ck_cfg.detector))
    throw ConfigError("checkpoint/config mismatch: detector settings differ from " + checkpoint.string());
  ExperimentConfig cfg = with_strategy(config ? *config : ck_cfg, strategy_label);
  if (cfg.detector.num_classes != ds.generator.num_classes || cfg.detector.image_size != ds.generator.image_size ||
      cfg.detector.in_channels != ds.generator.channels)
    throw ConfigError("checkpoint/config mismatch: detector does not fit the dataset");

  Model model(ck_cfg.detector);
  import_parameters(model, ck.arrays);
  std::vector<ImageScore> scores;
  for (const auto& s : ds.samples) {
    switch (cfg.strategy) {
      case Strategy::kCommittee:
        scores.push_back(
            score_image_committee(model.forward(s.image), cfg.top_z, s.image_id, cfg.selection_weighted, cfg.gamma_fpil));
        break;
      case Strategy::kEntropy:
        scores.push_back(score_image_entropy(model.forward(s.image), s.image_id));
        break;
      default:
        throw UsageError("score-dump supports the committee and entropy strategies, not " + strategy_label);
    }
  }
  return format_score_dump(static_cast<int>(ck.cycle_index), cfg.strategy_label(), scores);
}

}  // namespace ccad
