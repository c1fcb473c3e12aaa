// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "longimam/cohort/types.hpp"

namespace longimam::model {

enum class ScenarioId : std::uint8_t { c1, p1c1, p2c1, p3c1, p4c1, p1, p2, p3, p4 };

inline constexpr std::array<ScenarioId, 9> kAllScenarios{
    ScenarioId::c1, ScenarioId::p1c1, ScenarioId::p2c1, ScenarioId::p3c1, ScenarioId::p4c1,
    ScenarioId::p1, ScenarioId::p2,   ScenarioId::p3,   ScenarioId::p4};

/// "1C", "1P1C", ..., "4P".
std::string_view to_string(ScenarioId id);
/// Throws UsageError on anything outside the nine identifiers.
ScenarioId parse_scenario(std::string_view text);

std::size_t prior_count(ScenarioId id);
bool includes_current(ScenarioId id);
inline std::size_t sequence_length(ScenarioId id) { return prior_count(id) + (includes_current(id) ? 1 : 0); }

enum class ScenarioGroup : std::uint8_t { current_only, priors_and_current, priors_only };
ScenarioGroup group_of(ScenarioId id);
/// "Current visit only", "Priors + current visit", "Priors only".
std::string_view group_label(ScenarioGroup group);

/// Exams fed to the model for one subject, oldest first.
struct SequenceInput {
  std::string subject_id;
  int label = 0;
  std::vector<cohort::Exam> exams;
  bool includes_current = false;
};

/// 3P1C -> [prior3, prior2, prior1, current]; 2P -> [prior2, prior1].
/// Throws DataError when the index lacks a required prior.
SequenceInput build_scenario_input(const cohort::LongitudinalIndex& index, ScenarioId scenario);

}  // namespace longimam::model
