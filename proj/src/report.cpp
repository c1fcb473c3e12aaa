// SPDX-License-Identifier: Apache-2.0
#include "longimam/evaluation/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "longimam/errors.hpp"

namespace longimam::evaluation {

std::vector<PredictionRecord> ensemble_records(const std::vector<std::string>& ids, const std::vector<int>& labels,
                                               const std::vector<std::vector<double>>& fold_probs) {
  if (ids.size() != labels.size()) throw UsageError("ensemble_records: ids and labels differ in length");
  if (fold_probs.empty()) throw UsageError("ensemble_records: no folds");
  for (const auto& f : fold_probs) {
    if (f.size() != ids.size()) throw UsageError("ensemble_records: fold prediction count mismatch");
  }
  std::vector<PredictionRecord> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    PredictionRecord& r = out[i];
    r.subject_id = ids[i];
    r.label = labels[i];
    for (const auto& f : fold_probs) r.fold_probs.push_back(f[i]);
    r.ensemble = exact_mean(r.fold_probs);
  }
  return out;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, '\t')) out.push_back(cell);
  return out;
}

}  // namespace

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions '" + path + "'");
  const std::size_t folds = records.empty() ? 0 : records.front().fold_probs.size();
  out << "subject_id\tlabel";
  for (std::size_t f = 0; f < folds; ++f) out << "\tfold_" << f;
  out << "\tensemble\n";
  for (const PredictionRecord& r : records) {
    if (r.fold_probs.size() != folds) throw UsageError("predictions: inconsistent fold count");
    out << r.subject_id << '\t' << r.label;
    for (double p : r.fold_probs) out << '\t' << fmt17(p);
    out << '\t' << fmt17(r.ensemble) << '\n';
  }
  if (!out) throw DataError("failed writing predictions '" + path + "'");
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read predictions '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("predictions '" + path + "' is empty");
  const std::vector<std::string> header = split_tabs(line);
  if (header.size() < 3 || header[0] != "subject_id" || header[1] != "label" || header.back() != "ensemble") {
    throw DataError("predictions '" + path + "' has an unexpected header");
  }
  const std::size_t folds = header.size() - 3;
  std::vector<PredictionRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_tabs(line);
    if (cells.size() != header.size()) {
      throw DataError("predictions '" + path + "' line " + std::to_string(lineno) + ": wrong column count");
    }
    PredictionRecord r;
    try {
      r.subject_id = cells[0];
      r.label = std::stoi(cells[1]);
      for (std::size_t f = 0; f < folds; ++f) r.fold_probs.push_back(std::stod(cells[2 + f]));
      r.ensemble = std::stod(cells.back());
    } catch (const std::exception&) {
      throw DataError("predictions '" + path + "' line " + std::to_string(lineno) + ": malformed number");
    }
    out.push_back(std::move(r));
  }
  return out;
}

MetricReport metric_report(std::span<const double> scores, std::span<const int> labels, const BootstrapConfig& boot) {
  MetricReport m;
  m.n = scores.size();
  m.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  m.auc = try_auc(scores, labels);
  if (m.auc) m.ci = bootstrap_ci(scores, labels, boot);
  return m;
}

std::string format_auc(const MetricReport& m) {
  if (!m.auc) return "n/a";
  std::string s = fmt3(*m.auc);
  if (m.ci) s += " (" + fmt3(m.ci->lo) + "–" + fmt3(m.ci->hi) + ")";
  return s;
}

std::string_view to_string(SubgroupKind kind) {
  switch (kind) {
    case SubgroupKind::density_at_current: return "density_at_current";
    case SubgroupKind::age_at_current: return "age_at_current";
    case SubgroupKind::density_change: return "density_change";
  }
  return "?";
}

std::vector<std::string> subgroup_names(const SubgroupDef& def) {
  switch (def.kind) {
    case SubgroupKind::density_at_current: return {"non-dense", "dense"};
    case SubgroupKind::age_at_current: {
      const std::string c = std::to_string(static_cast<int>(def.age_cutoff));
      return {"<" + c, ">=" + c};
    }
    case SubgroupKind::density_change: return {"no change", "change"};
  }
  return {};
}

std::string subgroup_of(const cohort::LongitudinalIndex& index, const SubgroupDef& def, model::ScenarioId scenario) {
  const std::vector<std::string> names = subgroup_names(def);
  switch (def.kind) {
    case SubgroupKind::density_at_current: {
      const bool dense = index.current.birads == cohort::Birads::c || index.current.birads == cohort::Birads::d;
      return names[dense ? 1 : 0];
    }
    case SubgroupKind::age_at_current: return names[index.current.age_at_visit >= def.age_cutoff ? 1 : 0];
    case SubgroupKind::density_change: {
      const model::SequenceInput input = model::build_scenario_input(index, scenario);
      bool change = false;
      for (std::size_t t = 1; t < input.exams.size(); ++t) {
        if (input.exams[t].birads != input.exams[t - 1].birads) change = true;
      }
      return names[change ? 1 : 0];
    }
  }
  return {};
}

std::vector<SubgroupResult> stratify(const std::vector<PredictionRecord>& records,
                                     const std::map<std::string, cohort::LongitudinalIndex>& cohort,
                                     const SubgroupDef& def, model::ScenarioId scenario, const BootstrapConfig& boot) {
  const std::vector<std::string> names = subgroup_names(def);
  std::vector<std::vector<double>> scores(names.size());
  std::vector<std::vector<int>> labels(names.size());
  for (const PredictionRecord& r : records) {
    auto it = cohort.find(r.subject_id);
    if (it == cohort.end()) throw DataError("stratify: no covariates for subject " + r.subject_id);
    const std::string name = subgroup_of(it->second, def, scenario);
    const std::size_t k = static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
    scores[k].push_back(r.ensemble);
    labels[k].push_back(r.label);
  }
  std::vector<SubgroupResult> out;
  for (std::size_t k = 0; k < names.size(); ++k) out.push_back({names[k], metric_report(scores[k], labels[k], boot)});
  return out;
}

ScenarioReport scenario_report(std::vector<ScenarioResult> results) {
  std::sort(results.begin(), results.end(),
            [](const ScenarioResult& a, const ScenarioResult& b) { return a.scenario < b.scenario; });
  ScenarioReport report;
  std::map<model::ScenarioGroup, double> best_auc;
  for (const ScenarioResult& r : results) {
    if (!r.metric.auc) continue;
    const model::ScenarioGroup g = model::group_of(r.scenario);
    auto it = best_auc.find(g);
    if (it == best_auc.end() || *r.metric.auc > it->second) {
      best_auc[g] = *r.metric.auc;
      report.best[g] = r.scenario;
    }
  }
  report.rows = std::move(results);
  return report;
}

namespace {

bool is_best(const ScenarioReport& report, model::ScenarioId id) {
  auto it = report.best.find(model::group_of(id));
  return it != report.best.end() && it->second == id;
}

std::string pad(std::string s, std::size_t width) {
  // Column widths count code points so the en dash does not skew alignment.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  if (cps < width) s.append(width - cps, ' ');
  return s;
}

}  // namespace

std::string render_text(const ScenarioReport& report) {
  std::ostringstream out;
  out << "Scenario comparison: ensemble test AUC (95% bootstrap CI); * = best in group\n\n";
  out << pad("Scenario", 10) << pad("AUC (95% CI)", 24) << pad("N", 7) << pad("Cases", 7) << "\n";
  std::optional<model::ScenarioGroup> group;
  for (const ScenarioResult& r : report.rows) {
    const model::ScenarioGroup g = model::group_of(r.scenario);
    if (group != g) {
      out << model::group_label(g) << "\n";
      group = g;
    }
    out << "  " << pad(std::string(model::to_string(r.scenario)), 8) << pad(format_auc(r.metric), 24)
        << pad(std::to_string(r.metric.n), 7) << pad(std::to_string(r.metric.positives), 7)
        << (is_best(report, r.scenario) ? "*" : "") << "\n";
  }
  for (SubgroupKind kind :
       {SubgroupKind::density_at_current, SubgroupKind::age_at_current, SubgroupKind::density_change}) {
    bool header = false;
    for (const ScenarioResult& r : report.rows) {
      for (const auto& [k, parts] : r.subgroups) {
        if (k != kind) continue;
        if (!header) {
          out << "\nSubgroups by " << to_string(kind) << "\n";
          out << pad("Scenario", 10);
          for (const SubgroupResult& p : parts) out << pad(p.name + " AUC (95% CI)", 30) << pad("N", 7);
          out << "\n";
          header = true;
        }
        out << pad(std::string(model::to_string(r.scenario)), 10);
        for (const SubgroupResult& p : parts) out << pad(format_auc(p.metric), 30) << pad(std::to_string(p.metric.n), 7);
        out << "\n";
      }
    }
  }
  return out.str();
}

namespace {

nlohmann::ordered_json metric_json(const MetricReport& m) {
  nlohmann::ordered_json j;
  j["n"] = m.n;
  j["positives"] = m.positives;
  j["auc"] = m.auc ? nlohmann::ordered_json(*m.auc) : nlohmann::ordered_json(nullptr);
  j["ci_lo"] = m.ci ? nlohmann::ordered_json(m.ci->lo) : nlohmann::ordered_json(nullptr);
  j["ci_hi"] = m.ci ? nlohmann::ordered_json(m.ci->hi) : nlohmann::ordered_json(nullptr);
  j["formatted"] = format_auc(m);
  return j;
}

}  // namespace

std::string render_json(const ScenarioReport& report) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const ScenarioResult& r : report.rows) {
    nlohmann::ordered_json j;
    j["scenario"] = model::to_string(r.scenario);
    j["group"] = model::group_label(model::group_of(r.scenario));
    j["metric"] = metric_json(r.metric);
    j["best_in_group"] = is_best(report, r.scenario);
    nlohmann::ordered_json subs = nlohmann::ordered_json::object();
    for (const auto& [kind, parts] : r.subgroups) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const SubgroupResult& p : parts) {
        nlohmann::ordered_json pj;
        pj["name"] = p.name;
        pj["metric"] = metric_json(p.metric);
        arr.push_back(pj);
      }
      subs[std::string(to_string(kind))] = arr;
    }
    j["subgroups"] = subs;
    rows.push_back(j);
  }
  nlohmann::ordered_json root;
  root["rows"] = rows;
  return root.dump(2) + "\n";
}

}  // namespace longimam::evaluation
