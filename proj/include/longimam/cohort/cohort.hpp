// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "longimam/cohort/types.hpp"

namespace longimam::cohort {

struct EligibilityRules {
  std::size_t min_visits = 5;
  std::size_t retained_visits = 5;
  std::int32_t min_interval_days = 274;  // nine months
  int min_start_age = 40;
  int max_start_age = 74;
};

struct EligibilityReport {
  std::size_t input_subjects = 0;
  std::size_t too_few_visits = 0;
  std::size_t short_interval = 0;
  std::size_t age_out_of_range = 0;
  std::size_t retained_subjects = 0;

  /// Flowchart-style summary, one line per exclusion rule.
  std::string flowchart() const;
};

struct EligibilityResult {
  std::vector<Subject> subjects;
  EligibilityReport report;
};

/// Number of visits that can serve as model input: every exam for a case,
/// every exam but the trailing confirmation exam for a control.
std::size_t input_visit_count(const Subject& subject);

/// Drops subjects with too few input visits, any interval below the minimum,
/// or a screening start age outside the allowed range (rules checked in that
/// order; each subject is counted under the first rule it fails). Survivors
/// keep only their most recent input visits (plus the confirmation exam for
/// controls). Idempotent.
EligibilityResult apply_eligibility(std::span<const Subject> subjects,
                                    const EligibilityRules& rules = {});

/// Current exam and priors for one subject, or nullopt when a control has no
/// confirming later exam (or a case has no exam at all).
std::optional<LongitudinalIndex> index_longitudinal(const Subject& subject, std::size_t max_priors = 4);

enum class Split : std::uint8_t { train, validation, test };
std::string_view to_string(Split split);
Split parse_split(std::string_view text);

/// Subject-level split stratified by label. Split sizes follow the ratios by
/// largest remainder on the total count; positives are distributed the same
/// way, so prevalence per split is as close to overall as integer counts allow.
std::map<std::string, Split> stratified_split(std::span<const LabeledId> subjects,
                                              std::array<double, 3> ratios, std::uint64_t seed);

/// Stratified k-fold assignment; fold sizes differ by at most one.
std::map<std::string, int> kfold_split(std::span<const LabeledId> subjects, int k, std::uint64_t seed);

/// All positives plus negatives sampled without replacement up to `target`.
/// Returned ids keep the input order.
std::vector<std::string> reduced_eval_subset(std::span<const LabeledId> subjects, std::size_t target,
                                             std::uint64_t seed);

/// split + fold per subject, as persisted in the split file.
struct SplitRecord {
  Split split = Split::train;
  int fold = -1;  // -1 when the subject takes no part in cross-validation
};
using SplitTable = std::map<std::string, SplitRecord>;

/// Tab-separated: header "subject_id\tsplit\tfold", one row per subject.
void write_split_file(const std::string& path, const SplitTable& table);
SplitTable read_split_file(const std::string& path);

}  // namespace longimam::cohort
