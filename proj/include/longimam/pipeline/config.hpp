// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "longimam/cohort/cohort.hpp"
#include "longimam/cohort/synthetic.hpp"
#include "longimam/evaluation/report.hpp"
#include "longimam/model/model.hpp"
#include "longimam/preprocess/preprocess.hpp"
#include "longimam/training/training.hpp"

namespace longimam::pipeline {

inline constexpr int kConfigVersion = 1;

struct PathsConfig {
  std::string output_dir = "run";
  /// Empty: <output_dir>/data/manifest.jsonl (written by synth).
  std::string manifest;
};

struct CohortConfig {
  cohort::EligibilityRules rules;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  int folds = 9;
};

struct StepConfig {
  training::TrainConfig train;
  /// Step 1 only.
  std::vector<training::Arm> arms;
  /// Step 2 only.
  std::vector<model::ScenarioId> scenarios;
};

struct EvalConfig {
  std::size_t bootstrap_replicates = 1000;
  double level = 0.95;
  double age_cutoff = 55.0;
  bool subgroups = true;
  std::vector<model::ScenarioId> scenarios;
};

/// Every key has a default; unknown keys are rejected with UsageError.
struct RunConfig {
  std::uint64_t seed = 20240101;
  PathsConfig paths;
  cohort::SyntheticConfig synthetic;
  CohortConfig cohort;
  preprocess::PreprocessConfig preprocess;
  model::ModelConfig model;
  StepConfig train1;
  StepConfig train2;
  EvalConfig eval;

  RunConfig();

  static RunConfig from_json(const std::string& text);
  /// Fully resolved config; from_json(to_json()) reproduces it.
  std::string to_json() const;

  /// model with image extents taken from the preprocess section.
  model::ModelConfig model_config() const;
};

/// Empty path returns the defaults. Throws UsageError for malformed content.
RunConfig load_config(const std::string& path);

}  // namespace longimam::pipeline
