#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "tiny_setup.hpp"

using namespace ccad;

namespace {

json tiny_config_json(const fs::path& data_dir, int num_images = 30) {
  json j = tiny::experiment(Strategy::kRandom);
  j["dataset_dir"] = data_dir.string();
  j["num_cycles"] = 1;
  j["dataset"] = {{"seed", 1}, {"num_images", num_images}, {"test_fraction", 0.2}, {"generator", tiny::generator()}};
  return j;
}

CycleRecord record(int p, int labeled, double map, int tp) {
  CycleRecord r;
  r.cycle_index = p;
  r.labeled_count = labeled;
  r.map_50 = map;
  r.true_positive_instances_selected = tp;
  return r;
}

}  // namespace

TEST(SeedList, ParsesRangesAndLists) {
  EXPECT_EQ(parse_seed_list("0-2,7"), (std::vector<std::uint64_t>{0, 1, 2, 7}));
  EXPECT_EQ(parse_seed_list("4"), (std::vector<std::uint64_t>{4}));
  EXPECT_THROW(parse_seed_list("3-1"), ConfigError);
  EXPECT_THROW(parse_seed_list("x"), ConfigError);
  EXPECT_THROW(parse_seed_list(""), ConfigError);
}

TEST(Config, HashIgnoresKeyOrderAndRoundTrips) {
  const auto a = json::parse(R"({"seed": 1, "lambda": 0.5})");
  const auto b = json::parse(R"({"lambda": 0.5, "seed": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  const auto cfg = tiny::experiment();
  EXPECT_EQ(config_hash(json(cfg).get<ExperimentConfig>()), config_hash(cfg));
}

TEST(Config, DefaultConfigFileLoads) {
  const auto root = read_json_file(fs::path(CCAD_SOURCE_DIR) / "configs" / "default.json");
  const auto cfg = experiment_config_from(root);
  EXPECT_EQ(config_hash(cfg), config_hash(ExperimentConfig{}));
  const auto spec = dataset_spec_from(root);
  EXPECT_EQ(spec.num_images, 500);
}

TEST(Config, InvalidValuesAreRejected) {
  json j = tiny::experiment();
  j["initial_fraction"] = 1.5;
  EXPECT_THROW(experiment_config_from(j), ConfigError);
  j = tiny::experiment();
  j["strategy"] = "bogus";
  EXPECT_ANY_THROW(experiment_config_from(j));
}

TEST(Generate, DeterministicSplitAndForce) {
  const auto a = tiny::temp_dir("gen_a"), b = tiny::temp_dir("gen_b");
  json cfg = tiny_config_json(a);
  cfg["dataset"]["num_images"] = 500;
  const auto d = cmd_generate(cfg, a, false);
  cmd_generate(cfg, b, false);
  EXPECT_EQ(tiny::slurp(a / "index.jsonl"), tiny::slurp(b / "index.jsonl"));
  EXPECT_EQ(d.train_ids.size(), 400u);
  EXPECT_EQ(d.test_ids.size(), 100u);
  EXPECT_THROW(cmd_generate(cfg, a, false), ConfigError);
  EXPECT_NO_THROW(cmd_generate(cfg, a, true));
  const auto back = load_dataset(a);
  EXPECT_EQ(back.train_ids, d.train_ids);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, MissingDatasetNamesGenerate) {
  const auto out = tiny::temp_dir("run_missing");
  RunRequest req;
  req.config = tiny_config_json(out / "nowhere");
  req.out_dir = out;
  try {
    cmd_run(req);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("generate"), std::string::npos);
  }
  fs::remove_all(out);
}

TEST(Run, FansOutOverStrategiesAndSeeds) {
  const auto data = tiny::temp_dir("run_data"), out = tiny::temp_dir("run_out");
  const json cfg = tiny_config_json(data);
  cmd_generate(cfg, data, false);
  RunRequest req;
  req.config = cfg;
  req.out_dir = out;
  req.strategies = {"random", "committee"};
  req.seeds = {0};
  std::ostringstream log;
  const auto outcome = cmd_run(req, log);
  EXPECT_EQ(outcome.failures, 0);
  EXPECT_TRUE(fs::exists(out / "random" / "seed_0" / "cycle_records.jsonl"));
  EXPECT_TRUE(fs::exists(out / "committee" / "seed_0" / "cycle_records.jsonl"));
  const auto manifest = read_json_file(out / "manifest.json");
  EXPECT_EQ(manifest.at("runs").size(), 2u);
  for (const auto& [key, entry] : manifest.at("runs").items()) EXPECT_EQ(entry.at("status"), "complete") << key;

  // A rerun without --resume refuses to clobber, and the failure is recorded.
  const auto again = cmd_run(req, log);
  EXPECT_EQ(again.failures, 2);
  EXPECT_EQ(again.manifest.at("runs").at("random/seed_0").at("status"), "failed");

  // Report over the real tree.
  const auto rep = tiny::temp_dir("run_report");
  write_report({out}, rep);
  for (const char* f : {"summary.json", "learning_curve.svg", "tp_counts.svg", "ablation.md"})
    EXPECT_TRUE(fs::exists(rep / f)) << f;
  fs::remove_all(data);
  fs::remove_all(out);
  fs::remove_all(rep);
}

TEST(Report, MeansMatchHandAverages) {
  SeedRecords runs;
  runs[0] = {record(0, 20, 0.1, 5), record(1, 45, 0.3, 7)};
  runs[1] = {record(0, 20, 0.2, 3), record(1, 45, 0.5, 11)};
  const auto s = summarize("committee", runs);
  ASSERT_EQ(s.cycles.size(), 2u);
  EXPECT_NEAR(s.cycles[0].map_50.mean, 0.15, 1e-12);
  EXPECT_NEAR(s.cycles[0].map_50.std, 0.05, 1e-12);
  EXPECT_NEAR(s.cycles[1].map_50.mean, 0.4, 1e-12);
  EXPECT_NEAR(s.cycles[1].cumulative_tp.mean, (12.0 + 14.0) / 2, 1e-12);
  EXPECT_TRUE(s.gaps.empty());
}

TEST(Report, SingleSeedHasZeroStd) {
  SeedRecords runs;
  runs[4] = {record(0, 20, 0.1, 5), record(1, 45, 0.3, 7)};
  const auto s = summarize("random", runs);
  for (const auto& c : s.cycles) {
    EXPECT_EQ(c.map_50.std, 0.0);
    EXPECT_EQ(c.map_50.n, 1u);
  }
}

TEST(Report, ShorterRunsAreReportedAsGaps) {
  SeedRecords runs;
  runs[0] = {record(0, 20, 0.1, 5), record(1, 45, 0.3, 7), record(2, 70, 0.4, 1)};
  runs[1] = {record(0, 20, 0.2, 3)};
  const auto s = summarize("entropy", runs);
  ASSERT_EQ(s.cycles.size(), 3u);
  EXPECT_EQ(s.gaps.at(1), 1);
  EXPECT_EQ(s.cycles[2].map_50.n, 1u);
  EXPECT_NEAR(s.cycles[2].map_50.mean, 0.4, 1e-12);
  const auto j = summary_to_json({s});
  EXPECT_EQ(j.at("entropy").at("gaps").size(), 1u);
  EXPECT_NE(render_ablation_table({s}).find("Gap"), std::string::npos);
}

class ScoreDump : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = tiny::temp_dir("score_dump");
    auto cfg = tiny::experiment(Strategy::kCommittee);
    cfg.num_cycles = 0;
    run_experiment(cfg, ds_, dir_);
    ck_ = read_checkpoint(checkpoint_path(dir_, 0));
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const Checkpoint& ck) {
    const auto p = dir_ / "edited.ckpt";
    write_checkpoint(p, ck);
    return p;
  }

  std::vector<json> lines(const std::string& dump) {
    std::vector<json> out;
    std::istringstream is(dump);
    std::string line;
    while (std::getline(is, line)) out.push_back(json::parse(line));
    return out;
  }

  Dataset ds_ = tiny::dataset();
  fs::path dir_;
  Checkpoint ck_;
};

TEST_F(ScoreDump, TiedCommitteeScoresZero) {
  Checkpoint ck = ck_;
  for (auto& [name, m] : ck.arrays) {
    if (name.rfind("committee", 0) != 0 || name.rfind("committee0.", 0) == 0) continue;
    m = ck.arrays.at("committee0." + name.substr(name.find('.') + 1));
  }
  const auto out = lines(cmd_score_dump(write(ck), ds_, "committee"));
  ASSERT_EQ(out.size(), ds_.samples.size());
  for (const auto& j : out) EXPECT_EQ(j.at("score").get<double>(), 0.0);
}

TEST_F(ScoreDump, UniformMainHeadGivesMaximalEntropy) {
  Checkpoint ck = ck_;
  for (auto& [name, m] : ck.arrays)
    if (name.rfind("main.cls.", 0) == 0) m.setZero();
  const auto out = lines(cmd_score_dump(write(ck), ds_, "entropy"));
  const Model m(tiny::experiment().detector);
  const double expected = static_cast<double>(m.anchors().size()) * std::log(4.0);
  for (const auto& j : out) EXPECT_NEAR(j.at("score").get<double>(), expected, 1e-3 * expected);
}

TEST_F(ScoreDump, SortedDescendingWithStableTies) {
  const auto out = lines(cmd_score_dump(checkpoint_path(dir_, 0), ds_, "committee"));
  for (std::size_t i = 1; i < out.size(); ++i) {
    const double a = out[i - 1].at("score"), b = out[i].at("score");
    EXPECT_GE(a, b);
    if (a == b) {
      EXPECT_LT(out[i - 1].at("image_id").get<int>(), out[i].at("image_id").get<int>());
    }
  }
  // Re-sorting the parsed lines reproduces the dump order.
  auto sorted = out;
  std::stable_sort(sorted.begin(), sorted.end(), [](const json& a, const json& b) {
    return a.at("score").get<double>() > b.at("score").get<double>();
  });
  EXPECT_EQ(sorted, out);
}

TEST_F(ScoreDump, MismatchedConfigIsAnError) {
  auto other = tiny::experiment();
  other.detector.widths = {8, 8, 8, 8};
  EXPECT_THROW(cmd_score_dump(checkpoint_path(dir_, 0), ds_, "committee", other), ConfigError);
  EXPECT_THROW(cmd_score_dump(checkpoint_path(dir_, 0), ds_, "random"), UsageError);
}
