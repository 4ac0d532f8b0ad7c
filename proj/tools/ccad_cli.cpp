// ccad: generate datasets, run active-learning experiments, report, dump scores.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ccad/cli.hpp"

using namespace ccad;

int main(int argc, char** argv) {
  CLI::App app{"Committee-based active learning for anchor detectors on synthetic shapes"};
  app.require_subcommand(1);

  std::string config_path, out, seeds = "0", strategies, checkpoint, dataset_dir, strategy_one = "committee";
  std::vector<std::string> run_dirs;
  bool force = false, resume = false;

  auto* gen = app.add_subcommand("generate", "Materialize the synthetic dataset and its train/test split");
  gen->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Dataset directory (default: the config's dataset_dir)");
  gen->add_flag("--force", force, "Overwrite a non-empty output directory");

  auto* run = app.add_subcommand("run", "Run the active-learning loop for each strategy and seed");
  run->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seeds", seeds, "Seeds, e.g. 0,1,2 or 0-4")->capture_default_str();
  run->add_option("--strategy", strategies, "Comma list: committee, committee-nofpil, random, entropy, coreset");
  run->add_option("--out", out, "Run directory")->capture_default_str();
  run->add_flag("--resume", resume, "Continue from the last completed cycle");
  run->add_flag("--force", force, "Discard existing results for the requested runs");

  auto* report = app.add_subcommand("report", "Summaries and plots from one or more run directories");
  report->add_option("run_dirs", run_dirs, "Run directories")->required();
  report->add_option("--out", out, "Report directory (default: <first run dir>/report)");

  auto* dump = app.add_subcommand("score-dump", "Per-image uncertainty scores from a checkpoint");
  dump->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  dump->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  dump->add_option("--strategy", strategy_one, "committee, committee-nofpil or entropy")->capture_default_str();
  dump->add_option("--config", config_path, "Optional config to check against the checkpoint");
  dump->add_option("--out", out, "Output file (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const json cfg = read_json_file(config_path);
      const fs::path dir = out.empty() ? fs::path(experiment_config_from(cfg).dataset_dir) : fs::path(out);
      const Dataset d = cmd_generate(cfg, dir, force);
      std::cout << "wrote " << d.samples.size() << " images (" << d.train_ids.size() << " train / " << d.test_ids.size()
                << " test) to " << dir << "\n";
      return 0;
    }
    if (*run) {
      RunRequest req;
      req.config = read_json_file(config_path);
      req.seeds = parse_seed_list(seeds);
      req.strategies = split_list(strategies);
      if (!out.empty()) req.out_dir = out;
      req.resume = resume;
      req.force = force;
      const RunOutcome o = cmd_run(req);
      std::cout << "run directory: " << req.out_dir << " (" << o.failures << " failed)\n";
      return o.failures == 0 ? 0 : 1;
    }
    if (*report) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const fs::path dest = out.empty() ? dirs.front() / "report" : fs::path(out);
      const auto summaries = write_report(dirs, dest);
      std::cout << render_ablation_table(summaries) << "report written to " << dest << "\n";
      return 0;
    }
    if (*dump) {
      std::optional<ExperimentConfig> cfg;
      if (!config_path.empty()) cfg = experiment_config_from(read_json_file(config_path));
      const std::string text = cmd_score_dump(checkpoint, load_dataset(dataset_dir), strategy_one, cfg);
      if (out.empty()) {
        std::cout << text;
      } else {
        write_file_atomic(out, text);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
