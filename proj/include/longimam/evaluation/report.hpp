// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "longimam/cohort/types.hpp"
#include "longimam/evaluation/metrics.hpp"
#include "longimam/model/scenario.hpp"

namespace longimam::evaluation {

struct PredictionRecord {
  std::string subject_id;
  int label = 0;
  std::vector<double> fold_probs;
  /// exact_mean(fold_probs).
  double ensemble = 0.0;
};

/// Builds one record per subject from per-fold probabilities (fold-major:
/// fold_probs[f][i] is fold f's probability for subject i).
std::vector<PredictionRecord> ensemble_records(const std::vector<std::string>& ids, const std::vector<int>& labels,
                                               const std::vector<std::vector<double>>& fold_probs);

/// Tab-separated: subject_id, label, fold_0..fold_{K-1}, ensemble. Values are
/// written with 17 significant digits so they read back bit-exactly.
void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::string& path);

/// AUC with a bootstrap interval; both empty when a class is missing.
struct MetricReport {
  std::size_t n = 0;
  std::size_t positives = 0;
  std::optional<double> auc;
  std::optional<ConfidenceInterval> ci;
};

MetricReport metric_report(std::span<const double> scores, std::span<const int> labels, const BootstrapConfig& boot);

/// "0.767 (0.702–0.829)", or "n/a" when undefined.
std::string format_auc(const MetricReport& m);

enum class SubgroupKind { density_at_current, age_at_current, density_change };
std::string_view to_string(SubgroupKind kind);

struct SubgroupDef {
  SubgroupKind kind = SubgroupKind::density_at_current;
  double age_cutoff = 55.0;
};

/// Partition name for one subject: "non-dense" / "dense", "<55" / ">=55",
/// "no change" / "change". Density change is evaluated over exactly the exams
/// the scenario feeds the model.
std::string subgroup_of(const cohort::LongitudinalIndex& index, const SubgroupDef& def, model::ScenarioId scenario);

/// Both partition names in reporting order.
std::vector<std::string> subgroup_names(const SubgroupDef& def);

struct SubgroupResult {
  std::string name;
  MetricReport metric;
};

/// Partitions scored subjects. Throws DataError when a record has no entry in
/// `cohort`. Empty or single-class partitions report an undefined AUC.
std::vector<SubgroupResult> stratify(const std::vector<PredictionRecord>& records,
                                     const std::map<std::string, cohort::LongitudinalIndex>& cohort,
                                     const SubgroupDef& def, model::ScenarioId scenario, const BootstrapConfig& boot);

struct ScenarioResult {
  model::ScenarioId scenario = model::ScenarioId::c1;
  MetricReport metric;
  std::vector<std::pair<SubgroupKind, std::vector<SubgroupResult>>> subgroups;
};

struct ScenarioReport {
  std::vector<ScenarioResult> rows;  // canonical scenario order
  /// Per group, the scenario with the highest AUC.
  std::map<model::ScenarioGroup, model::ScenarioId> best;
};

ScenarioReport scenario_report(std::vector<ScenarioResult> results);
std::string render_text(const ScenarioReport& report);
std::string render_json(const ScenarioReport& report);

}  // namespace longimam::evaluation
