#pragma once

// Small, fast configurations for loop and CLI tests.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "ccad/cli.hpp"

namespace tiny {

inline ccad::GeneratorConfig generator() {
  ccad::GeneratorConfig g;
  g.image_size = 48;
  g.channels = 2;
  g.hard.object_side = {10, 16};
  g.easy.object_side = {18, 30};
  g.hard.objects = {2, 4};
  return g;
}

inline ccad::ExperimentConfig experiment(ccad::Strategy s = ccad::Strategy::kCommittee) {
  ccad::ExperimentConfig c;
  c.strategy = s;
  c.seed = 3;
  c.initial_fraction = 0.25;
  c.budget_per_cycle = 4;
  c.num_cycles = 2;
  c.top_z = 10;
  c.epochs_labeled = 2;
  c.epochs_unlabeled = 1;
  c.min_labeled_iterations = 6;
  c.batch_size = 4;
  c.warmup_iterations = 2;
  c.detector.image_size = 48;
  c.detector.in_channels = 2;
  c.detector.widths = {4, 6, 8, 8};
  return c;
}

inline ccad::Dataset dataset(int q = 30) { return ccad::make_dataset(1, q, generator(), 0.2); }

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("ccad_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace tiny
