// SPDX-License-Identifier: Apache-2.0
#include "longimam/model/scenario.hpp"

#include "longimam/errors.hpp"

namespace longimam::model {

namespace {

struct ScenarioInfo {
  std::string_view name;
  std::size_t priors;
  bool current;
};

constexpr std::array<ScenarioInfo, 9> kInfo{{{"1C", 0, true},
                                             {"1P1C", 1, true},
                                             {"2P1C", 2, true},
                                             {"3P1C", 3, true},
                                             {"4P1C", 4, true},
                                             {"1P", 1, false},
                                             {"2P", 2, false},
                                             {"3P", 3, false},
                                             {"4P", 4, false}}};

const ScenarioInfo& info(ScenarioId id) { return kInfo[static_cast<std::size_t>(id)]; }

}  // namespace

std::string_view to_string(ScenarioId id) { return info(id).name; }

ScenarioId parse_scenario(std::string_view text) {
  for (ScenarioId id : kAllScenarios) {
    if (info(id).name == text) return id;
  }
  throw UsageError("unknown scenario '" + std::string(text) +
                   "' (expected one of 1C, 1P1C, 2P1C, 3P1C, 4P1C, 1P, 2P, 3P, 4P)");
}

std::size_t prior_count(ScenarioId id) { return info(id).priors; }
bool includes_current(ScenarioId id) { return info(id).current; }

ScenarioGroup group_of(ScenarioId id) {
  if (id == ScenarioId::c1) return ScenarioGroup::current_only;
  return includes_current(id) ? ScenarioGroup::priors_and_current : ScenarioGroup::priors_only;
}

std::string_view group_label(ScenarioGroup group) {
  switch (group) {
    case ScenarioGroup::current_only: return "Current visit only";
    case ScenarioGroup::priors_and_current: return "Priors + current visit";
    case ScenarioGroup::priors_only: return "Priors only";
  }
  return "?";
}

SequenceInput build_scenario_input(const cohort::LongitudinalIndex& index, ScenarioId scenario) {
  const std::size_t k = prior_count(scenario);
  if (index.priors.size() < k) {
    throw DataError("subject " + index.subject_id + " has " + std::to_string(index.priors.size()) +
                    " prior exam(s) but scenario " + std::string(to_string(scenario)) + " needs " +
                    std::to_string(k));
  }
  SequenceInput input;
  input.subject_id = index.subject_id;
  input.label = index.label;
  input.includes_current = includes_current(scenario);
  for (std::size_t p = k; p >= 1; --p) input.exams.push_back(index.priors[p - 1]);
  if (input.includes_current) input.exams.push_back(index.current);
  return input;
}

}  // namespace longimam::model
