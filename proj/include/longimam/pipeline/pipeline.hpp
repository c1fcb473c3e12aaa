// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "longimam/pipeline/config.hpp"

namespace longimam::pipeline {

/// Output layout under paths.output_dir:
///   resolved_config.json
///   data/manifest.jsonl, data/images/...        synth
///   cohort/cohort.jsonl, cohort/eligibility.txt ingest
///   cohort/splits.tsv                           split
///   step1/<arm>/{checkpoint.bin,train_log.jsonl}, step1/best.ckpt,
///   step1/arms.txt, step1/arms.json             train1
///   step2/<scenario>/fold_<f>.ckpt, fold_<f>_log.jsonl   train2
///   eval/<scenario>/{predictions.tsv,oof_predictions.tsv,metrics.json}  eval
///   report/report.txt, report/report.json       report
struct Layout {
  std::string root;

  std::string resolved_config() const;
  std::string manifest(const RunConfig& config) const;
  std::string cohort() const;
  std::string eligibility() const;
  std::string splits() const;
  std::string step1_dir() const;
  std::string step1_arm_dir(const std::string& arm) const;
  std::string step1_best() const;
  std::string step2_dir(model::ScenarioId id) const;
  std::string step2_fold(model::ScenarioId id, int fold) const;
  std::string eval_dir(model::ScenarioId id) const;
  std::string report_dir() const;
};

/// Progress messages; silent when unset.
using Logger = std::function<void(const std::string&)>;

void cmd_synth(const RunConfig& config, const Logger& log = {});
void cmd_ingest(const RunConfig& config, const Logger& log = {});
void cmd_split(const RunConfig& config, const Logger& log = {});
void cmd_train1(const RunConfig& config, const Logger& log = {});
void cmd_train2(const RunConfig& config, const Logger& log = {});
void cmd_eval(const RunConfig& config, const Logger& log = {});
void cmd_report(const RunConfig& config, const Logger& log = {});

/// Loads cohort/cohort.jsonl and indexes every subject with four priors.
std::vector<cohort::LongitudinalIndex> load_indexed_cohort(const RunConfig& config);

}  // namespace longimam::pipeline
