// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ccad/cli.hpp"
#include "oracles.hpp"

using namespace ccad;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  int id;
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

Verdict criterion_group_form() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0;
  int n = 0;
  for (int trial = 0; trial < 1200; ++trial, ++n) {
    const auto members = 2 + static_cast<int>(rng() % 5);
    const auto classes = 2 + static_cast<int>(rng() % 19);
    const auto r = oracle::random_probs(rng, members, classes, 1.0 + static_cast<double>(trial % 7));
    const double brute = oracle::pairwise_discrepancy(r);
    worst = std::max(worst, std::abs(instance_discrepancy(r) - brute) / std::max(brute, 1e-300));
  }
  const double secs = seconds_since(t0);
  return {1, worst <= 1e-9 && secs < 10.0,
          std::to_string(n) + " committees, max relative error " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Verdict criterion_gradients() {
  std::mt19937_64 rng(202);
  double focal_worst = 0, l1_worst = 0, dins_worst = 0;
  const int trials = 150;
  for (int trial = 0; trial < trials; ++trial) {
    const int rows = 1 + trial % 5, k = 2 + trial % 4;
    std::vector<int> cls;
    for (int j = 0; j < rows; ++j) cls.push_back(static_cast<int>(rng() % static_cast<unsigned>(k + 1)) - 1);
    const auto t = oracle::make_targets(cls, k - 1);
    const FocalParams fp{0.25, 2.0, FocalNormalization::kPositives};
    const MatR<double> logits = oracle::random_matrix(rng, rows, k, 1.5);
    MatR<double> analytic;
    focal_loss(softmax_rows(logits), t, fp, &analytic);
    const auto numeric =
        oracle::numeric_gradient([&](const MatR<double>& z) { return focal_loss(softmax_rows(z), t, fp); }, logits);
    focal_worst = std::max(focal_worst, oracle::max_relative_error(analytic, numeric, 1e-7));
  }
  for (int trial = 0; trial < trials; ++trial) {
    const int rows = 1 + trial % 6;
    const MatR<double> target = oracle::random_matrix(rng, rows, 4, 1.5);
    MatR<double> pred = oracle::random_matrix(rng, rows, 4, 1.5);
    for (Eigen::Index i = 0; i < pred.size(); ++i)
      if (std::abs(std::abs(pred.data()[i] - target.data()[i]) - 1.0) < 1e-2) pred.data()[i] += 0.05;
    MatR<double> analytic;
    smooth_l1(pred, target, &analytic);
    const auto numeric = oracle::numeric_gradient([&](const MatR<double>& p) { return smooth_l1(p, target); }, pred);
    l1_worst = std::max(l1_worst, oracle::max_relative_error(analytic, numeric, 1e-7));
  }
  for (int trial = 0; trial < trials; ++trial) {
    const auto r = oracle::random_probs(rng, 2 + trial % 5, 2 + trial % 6);
    MatR<double> analytic;
    instance_discrepancy(r, &analytic);
    const auto numeric = oracle::numeric_gradient([](const MatR<double>& x) { return instance_discrepancy(x); }, r);
    dins_worst = std::max(dins_worst, oracle::max_relative_error(analytic, numeric, 1e-7));
  }
  return {2, focal_worst < 1e-3 && l1_worst < 1e-3 && dins_worst < 1e-3,
          std::to_string(trials) + " inputs each; max relative error focal " + fmt(focal_worst) + ", smooth L1 " +
              fmt(l1_worst) + ", D_ins " + fmt(dins_worst)};
}

std::vector<MatR<float>> snapshot(const std::vector<Param<float>*>& params) {
  std::vector<MatR<float>> out;
  for (auto* p : params) out.push_back(p->value);
  return out;
}

bool bit_identical(const std::vector<Param<float>*>& params, const std::vector<MatR<float>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (std::memcmp(params[i]->value.data(), snap[i].data(), sizeof(float) * static_cast<std::size_t>(snap[i].size())))
      return false;
  return true;
}

Verdict criterion_isolation(const Dataset& ds, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  cfg.strategy = Strategy::kCommittee;
  ExperimentContext ctx(ds, cfg);
  const auto pool = init_pool(ds.train_ids, cfg.initial_fraction, cfg.budget_per_cycle, cfg.seed);
  Model model(cfg.detector);
  model.initialize(derive_seed(cfg.seed, {0xC7C1E, 0}));
  std::vector<MatR<float>> backbone, main_head, committee;
  TrainHooks hooks;
  hooks.after_labeled_phase = [&](Model& m) {
    backbone = snapshot(m.backbone_params());
    main_head = snapshot(m.main_head_params());
    committee = snapshot(m.committee_params());
  };
  const auto r = train_cycle(model, pool, ctx, 0, &hooks);
  const bool bb = bit_identical(model.backbone_params(), backbone);
  const bool mh = bit_identical(model.main_head_params(), main_head);
  const bool changed = !bit_identical(model.committee_params(), committee);
  return {3, bb && mh && changed && r.unlabeled_iterations > 0,
          std::to_string(r.unlabeled_iterations) + " unlabeled steps; backbone identical=" + (bb ? "yes" : "no") +
              ", main head identical=" + (mh ? "yes" : "no") + ", committee changed=" + (changed ? "yes" : "no")};
}

Verdict criterion_map_fixture() {
  const std::vector<GroundTruthBox> gts{{0, 0, {0, 0, 10, 10}}, {1, 0, {20, 20, 40, 40}}};
  const std::vector<ImageDetection> preds{
      {0, {{0, 0, 10, 10}, 0, 0.9}}, {0, {{50, 50, 60, 60}, 0, 0.8}}, {1, {{20, 20, 40, 40}, 0, 0.7}}};
  const double got = evaluate_map(preds, gts).map_50;
  const double expected = oracle::brute_force_ap({true, false, true}, 2);
  return {8, std::abs(got - expected) <= 1e-12, "mAP " + fmt(got, 17) + " vs brute force " + fmt(expected, 17)};
}

Verdict criterion_scaling(const fs::path& committee_run) {
  // Synthetic instance scores.
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0, 1);
  bool ok = true;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    std::vector<ImageScore> base, scaled;
    for (int i = 0; i < 60; ++i) {
      std::vector<double> inst(40);
      for (auto& v : inst) v = u(rng);
      auto inst_scaled = inst;
      for (auto& v : inst_scaled) v *= 7.3;
      base.push_back(score_from_instances(i, inst, 10));
      scaled.push_back(score_from_instances(i, inst_scaled, 10));
    }
    ok = select_top(base, 25) == select_top(scaled, 25);
  }
  // Real committee scores from the first cycle of a protocol run.
  std::ifstream is(committee_run / "scores_cycle_0.jsonl");
  std::vector<ImageScore> scaled;
  std::string line;
  while (std::getline(is, line)) {
    const auto j = json::parse(line);
    ImageScore s;
    s.image_id = j.at("image_id").get<ImageId>();
    s.score = 7.3 * j.at("score").get<double>();
    scaled.push_back(s);
  }
  const auto recorded = read_selection(committee_run / "selection_cycle_0.json").selected_ids;
  const bool real_ok = !scaled.empty() && select_top(scaled, recorded.size()) == recorded;
  return {10, ok && real_ok,
          std::string("synthetic trials ") + (ok ? "unchanged" : "changed") + "; recorded committee selection (" +
              std::to_string(scaled.size()) + " scores) " + (real_ok ? "unchanged" : "changed")};
}

std::vector<double> cumulative_tp_means(const StrategySummary& s) {
  std::vector<double> out;
  for (const auto& c : s.cycles) out.push_back(c.cumulative_tp.mean);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  fs::path work_dir = "acceptance_runs";
  std::string seeds_text = "0-4";
  app.add_option("--work-dir", work_dir, "directory for datasets, runs and the report");
  app.add_option("--seeds", seeds_text, "seed list for the protocol runs");
  CLI11_PARSE(app, argc, argv);

  std::vector<Verdict> verdicts;
  auto report = [&](const Verdict& v) {
    verdicts.push_back(v);
    std::printf("criterion %d: %s (%s)\n", v.id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  };

  try {
    report(criterion_group_form());
    report(criterion_gradients());
    report(criterion_map_fixture());

    const auto seeds = parse_seed_list(seeds_text);
    const DatasetSpec spec;
    const Dataset ds = make_dataset(spec.seed, spec.num_images, spec.generator, spec.test_fraction);
    const ExperimentConfig base;
    report(criterion_isolation(ds, base));

    fs::remove_all(work_dir);
    const fs::path runs = work_dir / "runs";
    const std::vector<std::string> labels{"committee", "committee-nofpil", "random", "entropy", "coreset"};
    std::map<std::string, SeedRecords> records;
    std::map<std::string, std::string> failures;
    const auto t0 = Clock::now();
    for (const auto& label : labels) {
      for (auto seed : seeds) {
        ExperimentConfig cfg = with_strategy(base, label);
        cfg.seed = seed;
        const auto dir = runs / label / ("seed_" + std::to_string(seed));
        try {
          const auto ts = Clock::now();
          records[label][seed] = run_experiment(cfg, ds, dir);
          std::cerr << "[" << label << "/seed_" << seed << "] done in " << fmt(seconds_since(ts)) << " s, final mAP "
                    << records[label][seed].back().map_50 << "\n";
        } catch (const std::exception& e) {
          failures[label] += "seed " + std::to_string(seed) + ": " + e.what() + "; ";
          std::cerr << "[" << label << "/seed_" << seed << "] failed: " << e.what() << "\n";
        }
      }
    }
    const double protocol_seconds = seconds_since(t0);
    write_report({runs}, work_dir / "report");

    const int cycles = base.num_cycles;
    auto complete = [&](const std::string& label) {
      if (failures.count(label) || records[label].size() != seeds.size()) return false;
      for (const auto& [seed, recs] : records[label])
        if (static_cast<int>(recs.size()) != cycles + 1) return false;
      return true;
    };
    const int need = static_cast<int>(seeds.size()) - 1;

    {  // 4: Phase B raises the image discrepancy
      int wins = 0;
      std::string detail;
      for (const auto& [seed, recs] : records["committee"]) {
        const auto& d = recs.front().committee;
        const bool win = d && d->d_img_after_unlabeled > d->d_img_after_labeled;
        wins += win;
        if (d) detail += " s" + std::to_string(seed) + ":" + fmt(d->d_img_after_labeled) + "->" + fmt(d->d_img_after_unlabeled);
      }
      report({4, complete("committee") && wins >= need,
              std::to_string(wins) + "/" + std::to_string(seeds.size()) + " seeds;" + detail});
    }
    {  // 5: FPIL lowers background discrepancy relative to positives
      int wins = 0;
      std::string detail;
      for (auto seed : seeds) {
        const auto& a = records["committee"][seed];
        const auto& b = records["committee-nofpil"][seed];
        if (a.empty() || b.empty() || !a.front().committee || !b.front().committee) continue;
        const double ra = a.front().committee->background_to_positive, rb = b.front().committee->background_to_positive;
        wins += ra < rb;
        detail += " s" + std::to_string(seed) + ":" + fmt(ra) + "<" + fmt(rb) + "?";
      }
      report({5, complete("committee") && complete("committee-nofpil") && wins >= need,
              std::to_string(wins) + "/" + std::to_string(seeds.size()) + " seeds;" + detail});
    }

    const auto sc = summarize("committee", records["committee"]);
    const auto sn = summarize("committee-nofpil", records["committee-nofpil"]);
    const auto sr = summarize("random", records["random"]);
    {  // 6: cumulative true positives
      const auto c = cumulative_tp_means(sc), n = cumulative_tp_means(sn), r = cumulative_tp_means(sr);
      bool ok = complete("committee") && complete("random") && complete("committee-nofpil");
      std::string detail = "committee/random/nofpil:";
      for (std::size_t p = 1; ok && p < c.size(); ++p) {
        ok = c[p] > r[p];
        detail += " p" + std::to_string(p) + " " + fmt(c[p]) + "/" + fmt(r[p]) + "/" + fmt(n[p]);
      }
      if (ok) ok = c.back() > n.back();
      report({6, ok, detail});
    }
    {  // 7: mAP, baselines complete, runtime
      int wins = 0;
      std::string detail = "committee-random mAP:";
      const bool have = complete("committee") && complete("random");
      double final_gain = 0;
      if (have) {
        for (int p = 1; p <= cycles; ++p) {
          const double d = sc.cycles[static_cast<std::size_t>(p)].map_50.mean - sr.cycles[static_cast<std::size_t>(p)].map_50.mean;
          wins += d >= 0;
          detail += " " + fmt(d, 3);
        }
        final_gain = sc.cycles.back().map_50.mean - sr.cycles.back().map_50.mean;
      }
      const bool baselines = complete("entropy") && complete("coreset");
      const bool fast = protocol_seconds <= 4 * 3600.0;
      report({7, have && wins >= 4 && final_gain > 0.01 && baselines && fast,
              std::to_string(wins) + "/" + std::to_string(cycles) + " cycles, final gain " + fmt(100 * final_gain, 3) +
                  " points;" + detail.substr(detail.find(':') + 1) + "; entropy+coreset complete=" +
                  (baselines ? "yes" : "no") + "; protocol " + fmt(protocol_seconds / 60, 3) + " min"});
    }
    {  // 9: determinism
      ExperimentConfig cfg = with_strategy(base, "committee");
      cfg.seed = seeds.front();
      const auto again = run_experiment(cfg, ds);
      const auto& first = records["committee"][seeds.front()];
      bool same = again.size() == first.size() && !first.empty();
      for (std::size_t i = 0; same && i < first.size(); ++i) same = first[i].same_outcome(again[i]);
      report({9, same, "committee seed " + std::to_string(seeds.front()) + " rerun, " + std::to_string(again.size()) +
                           " records " + (same ? "identical" : "differ")});
    }
    report(criterion_scaling(runs / "committee" / ("seed_" + std::to_string(seeds.front()))));
    for (const auto& [label, msg] : failures) std::cerr << "failed runs for " << label << ": " << msg << "\n";
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int failed = 0;
  std::printf("\nsummary:\n");
  for (const auto& v : verdicts) {
    std::printf("criterion %d: %s\n", v.id, v.pass ? "PASS" : "FAIL");
    failed += !v.pass;
  }
  return failed == 0 && verdicts.size() == 10 ? 0 : 1;
}
