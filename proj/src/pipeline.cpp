// SPDX-License-Identifier: Apache-2.0
#include "longimam/pipeline/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "longimam/cohort/manifest.hpp"
#include "longimam/errors.hpp"
#include "longimam/evaluation/report.hpp"
#include "longimam/model/checkpoint.hpp"

namespace longimam::pipeline {

namespace fs = std::filesystem;
using model::ScenarioId;
using numerics::Rng;

namespace {

std::string join(const std::string& a, const std::string& b) { return (fs::path(a) / b).string(); }

std::uint64_t derived_seed(std::uint64_t root, std::string_view name, std::initializer_list<std::uint64_t> ids = {}) {
  return Rng::substream(root, name, ids).next_u64();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

void require(const std::string& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw DataError("missing '" + path + "'; run '" + producer + "' first");
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

void emit(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void echo_config(const RunConfig& config) {
  const Layout layout{config.paths.output_dir};
  ensure_dir(layout.root);
  write_text(layout.resolved_config(), config.to_json());
}

struct Prepared {
  std::vector<cohort::LongitudinalIndex> index;
  cohort::SplitTable splits;
  std::unique_ptr<model::ImageStore> store;
};

Prepared prepare(const RunConfig& config) {
  const Layout layout{config.paths.output_dir};
  require(layout.splits(), "split");
  Prepared p;
  p.index = load_indexed_cohort(config);
  p.splits = cohort::read_split_file(layout.splits());
  p.store = std::make_unique<model::ImageStore>(fs::path(layout.cohort()).parent_path().string(), config.preprocess);
  for (const cohort::LongitudinalIndex& ix : p.index) {
    if (!p.splits.count(ix.subject_id)) {
      throw DataError("subject " + ix.subject_id + " is missing from '" + layout.splits() + "'; rerun 'split'");
    }
  }
  return p;
}

training::DataSet subset(const Prepared& p, ScenarioId scenario, const std::function<bool(const cohort::SplitRecord&)>& keep,
                         std::vector<int>* folds = nullptr) {
  training::DataSet d{{}, p.store.get(), nullptr};
  for (const cohort::LongitudinalIndex& ix : p.index) {
    const cohort::SplitRecord& r = p.splits.at(ix.subject_id);
    if (!keep(r)) continue;
    d.items.push_back(model::build_scenario_input(ix, scenario));
    if (folds) folds->push_back(r.fold);
  }
  return d;
}

bool in_split(const cohort::SplitRecord& r, cohort::Split s) { return r.split == s; }
bool in_cv(const cohort::SplitRecord& r) { return r.split != cohort::Split::test; }

training::TrainObserver epoch_logger(const Logger& log, const std::string& label) {
  training::TrainObserver obs;
  if (log) {
    obs.on_epoch = [log, label](const training::EpochRecord& r) {
      std::string msg = label + " epoch " + std::to_string(r.epoch) + " train " + fmt("%.5f", r.train_loss) +
                        " val " + fmt("%.5f", r.val_loss);
      if (r.val_auc) msg += " auc " + fmt("%.3f", *r.val_auc);
      log(msg);
    };
  }
  return obs;
}

evaluation::BootstrapConfig boot_config(const RunConfig& config, ScenarioId id) {
  evaluation::BootstrapConfig b;
  b.replicates = config.eval.bootstrap_replicates;
  b.level = config.eval.level;
  b.seed = derived_seed(config.seed, "bootstrap", {static_cast<std::uint64_t>(id)});
  return b;
}

evaluation::ScenarioResult score(const RunConfig& config, ScenarioId id,
                                 const std::vector<evaluation::PredictionRecord>& records,
                                 const std::map<std::string, cohort::LongitudinalIndex>& covariates) {
  const evaluation::BootstrapConfig boot = boot_config(config, id);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : records) {
    scores.push_back(r.ensemble);
    labels.push_back(r.label);
  }
  evaluation::ScenarioResult res;
  res.scenario = id;
  res.metric = evaluation::metric_report(scores, labels, boot);
  if (config.eval.subgroups) {
    for (evaluation::SubgroupKind kind : {evaluation::SubgroupKind::density_at_current,
                                          evaluation::SubgroupKind::age_at_current,
                                          evaluation::SubgroupKind::density_change}) {
      evaluation::SubgroupDef def{kind, config.eval.age_cutoff};
      res.subgroups.emplace_back(kind, evaluation::stratify(records, covariates, def, id, boot));
    }
  }
  return res;
}

std::string provenance_prefix(ScenarioId id) { return "step2:" + std::string(model::to_string(id)) + ":"; }

}  // namespace

std::string Layout::resolved_config() const { return join(root, "resolved_config.json"); }
std::string Layout::manifest(const RunConfig& config) const {
  return config.paths.manifest.empty() ? join(root, "data/manifest.jsonl") : config.paths.manifest;
}
std::string Layout::cohort() const { return join(root, "cohort/cohort.jsonl"); }
std::string Layout::eligibility() const { return join(root, "cohort/eligibility.txt"); }
std::string Layout::splits() const { return join(root, "cohort/splits.tsv"); }
std::string Layout::step1_dir() const { return join(root, "step1"); }
std::string Layout::step1_arm_dir(const std::string& arm) const { return join(step1_dir(), arm); }
std::string Layout::step1_best() const { return join(step1_dir(), "best.ckpt"); }
std::string Layout::step2_dir(ScenarioId id) const { return join(join(root, "step2"), std::string(model::to_string(id))); }
std::string Layout::step2_fold(ScenarioId id, int fold) const {
  return join(step2_dir(id), "fold_" + std::to_string(fold) + ".ckpt");
}
std::string Layout::eval_dir(ScenarioId id) const { return join(join(root, "eval"), std::string(model::to_string(id))); }
std::string Layout::report_dir() const { return join(root, "report"); }

void cmd_synth(const RunConfig& config, const Logger& log) {
  echo_config(config);
  const Layout layout{config.paths.output_dir};
  const std::string dir = join(layout.root, "data");
  ensure_dir(dir);
  cohort::SyntheticConfig syn = config.synthetic;
  syn.seed = derived_seed(config.seed, "synthetic");
  const cohort::SyntheticCohort c = cohort::generate_synthetic_cohort(syn, dir);
  std::size_t cases = 0;
  for (const cohort::Subject& s : c.subjects) cases += s.is_case();
  emit(log, "synth: " + std::to_string(c.subjects.size()) + " subjects (" + std::to_string(cases) +
                " cases) -> " + c.manifest_path);
}

void cmd_ingest(const RunConfig& config, const Logger& log) {
  echo_config(config);
  const Layout layout{config.paths.output_dir};
  const std::string manifest = layout.manifest(config);
  require(manifest, "synth");
  std::vector<cohort::Subject> subjects = cohort::read_manifest(manifest);
  cohort::EligibilityResult res = cohort::apply_eligibility(subjects, config.cohort.rules);
  // Re-anchor image references at the cohort directory.
  const fs::path src_dir = fs::absolute(fs::path(manifest)).parent_path();
  const fs::path dst_dir = fs::absolute(fs::path(layout.cohort())).parent_path();
  ensure_dir(dst_dir.string());
  for (cohort::Subject& s : res.subjects) {
    for (cohort::Exam& e : s.exams) {
      for (std::string& ref : e.images) {
        const fs::path p = fs::path(ref).is_absolute() ? fs::path(ref) : (src_dir / ref);
        ref = p.lexically_normal().lexically_relative(dst_dir).string();
      }
    }
  }
  cohort::write_manifest(layout.cohort(), res.subjects);
  write_text(layout.eligibility(), res.report.flowchart());
  emit(log, "ingest: " + std::to_string(res.report.retained_subjects) + " of " +
                std::to_string(res.report.input_subjects) + " subjects eligible");
}

std::vector<cohort::LongitudinalIndex> load_indexed_cohort(const RunConfig& config) {
  const Layout layout{config.paths.output_dir};
  require(layout.cohort(), "ingest");
  std::vector<cohort::LongitudinalIndex> out;
  for (const cohort::Subject& s : cohort::read_manifest(layout.cohort())) {
    std::optional<cohort::LongitudinalIndex> ix = cohort::index_longitudinal(s, 4);
    if (ix && ix->priors.size() == 4) out.push_back(std::move(*ix));
  }
  return out;
}

void cmd_split(const RunConfig& config, const Logger& log) {
  echo_config(config);
  const Layout layout{config.paths.output_dir};
  const std::vector<cohort::LongitudinalIndex> index = load_indexed_cohort(config);
  std::vector<cohort::LabeledId> ids;
  for (const auto& ix : index) ids.push_back({ix.subject_id, ix.label});
  const auto split = cohort::stratified_split(ids, config.cohort.split_ratios, derived_seed(config.seed, "split"));
  std::vector<cohort::LabeledId> cv;
  for (const auto& id : ids) {
    if (split.at(id.id) != cohort::Split::test) cv.push_back(id);
  }
  const auto folds = cohort::kfold_split(cv, config.cohort.folds, derived_seed(config.seed, "folds"));
  cohort::SplitTable table;
  for (const auto& id : ids) {
    cohort::SplitRecord r{split.at(id.id), -1};
    if (auto it = folds.find(id.id); it != folds.end()) r.fold = it->second;
    table[id.id] = r;
  }
  cohort::write_split_file(layout.splits(), table);
  std::size_t n[3] = {0, 0, 0};
  for (const auto& [id, r] : table) ++n[static_cast<int>(r.split)];
  emit(log, "split: train " + std::to_string(n[0]) + ", validation " + std::to_string(n[1]) + ", test " +
                std::to_string(n[2]) + "; " + std::to_string(config.cohort.folds) + " folds over train+validation");
}

void cmd_train1(const RunConfig& config, const Logger& log) {
  echo_config(config);
  const Layout layout{config.paths.output_dir};
  Prepared p = prepare(config);
  auto train = subset(p, ScenarioId::c1, [](const auto& r) { return in_split(r, cohort::Split::train); });
  auto val = subset(p, ScenarioId::c1, [](const auto& r) { return in_split(r, cohort::Split::validation); });
  auto test = subset(p, ScenarioId::c1, [](const auto& r) { return in_split(r, cohort::Split::test); });
  const model::LongiMamParams init =
      model::LongiMamParams::init(config.model_config(), derived_seed(config.seed, "init"));
  training::TrainConfig base = config.train1.train;
  base.seed = derived_seed(config.seed, "train1");

  std::vector<training::ArmResult> arms;
  for (const training::Arm& arm : config.train1.arms) {
    training::TrainObserver obs = epoch_logger(log, "train1 " + arm.name());
    training::Step1Result one = training::run_step1(init, train, val, test, {arm}, base, &obs);
    training::ArmResult& r = one.arms.front();
    const std::string dir = layout.step1_arm_dir(arm.name());
    ensure_dir(dir);
    model::save_checkpoint(join(dir, "checkpoint.bin"), r.fit.best,
                           "step1:" + arm.name() + ":epoch" + std::to_string(r.fit.best_epoch));
    training::write_train_log(join(dir, "train_log.jsonl"), r.fit.log);
    arms.push_back(std::move(r));
  }
  const std::size_t winner = training::select_step1_winner(arms);
  const training::ArmResult& best = arms[winner];
  model::save_checkpoint(layout.step1_best(), best.fit.best,
                         "step1:" + best.arm.name() + ":epoch" + std::to_string(best.fit.best_epoch));

  // Arm comparison table.
  const std::vector<int> test_labels = test.labels();
  std::ostringstream txt;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  txt << "Step 1 arms: test AUC (95% bootstrap CI) of the lowest-validation-loss checkpoint; * = selected\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-24s %-10s %-10s %s\n", "Arm", "Test AUC (95% CI)", "Best epoch",
                "Val loss", "Val AUC");
  txt << line;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const training::ArmResult& r = arms[i];
    evaluation::BootstrapConfig boot = boot_config(config, ScenarioId::c1);
    const evaluation::MetricReport m = evaluation::metric_report(r.test_probabilities, test_labels, boot);
    const std::string val_auc = r.fit.best_val_auc ? fmt("%.3f", *r.fit.best_val_auc) : "n/a";
    std::string auc_text = evaluation::format_auc(m);
    // The en dash takes three bytes but one column.
    std::snprintf(line, sizeof line, "%-16s %-26s %-10zu %-10.5f %s%s\n", r.arm.name().c_str(), auc_text.c_str(),
                  r.fit.best_epoch, r.fit.best_val_loss, val_auc.c_str(), i == winner ? " *" : "");
    txt << line;
    nlohmann::ordered_json j;
    j["arm"] = r.arm.name();
    j["best_epoch"] = r.fit.best_epoch;
    j["epochs_run"] = r.fit.log.size();
    j["best_val_loss"] = r.fit.best_val_loss;
    j["best_val_auc"] = r.fit.best_val_auc ? nlohmann::ordered_json(*r.fit.best_val_auc) : nlohmann::ordered_json();
    j["test_auc"] = m.auc ? nlohmann::ordered_json(*m.auc) : nlohmann::ordered_json();
    j["test_ci_lo"] = m.ci ? nlohmann::ordered_json(m.ci->lo) : nlohmann::ordered_json();
    j["test_ci_hi"] = m.ci ? nlohmann::ordered_json(m.ci->hi) : nlohmann::ordered_json();
    j["winner"] = i == winner;
    rows.push_back(j);
  }
  write_text(join(layout.step1_dir(), "arms.txt"), txt.str());
  write_text(join(layout.step1_dir(), "arms.json"), nlohmann::ordered_json{{"arms", rows}}.dump(2) + "\n");
  emit(log, "train1: selected arm " + best.arm.name());
}

void cmd_train2(const RunConfig& config, const Logger& log) {
  echo_config(config);
  const Layout layout{config.paths.output_dir};
  require(layout.step1_best(), "train1");
  Prepared p = prepare(config);
  model::Checkpoint step1 = model::load_checkpoint(layout.step1_best());
  if (!(step1.params.config == config.model_config())) {
    throw DataError("'" + layout.step1_best() + "' was trained with a different model config");
  }
  step1.params.set_backbone_trainable(false);
  model::FeatureCache cache(step1.params.backbone_digest());
  training::TrainConfig cfg = config.train2.train;
  for (ScenarioId id : config.train2.scenarios) {
    std::vector<int> folds;
    training::DataSet data = subset(p, id, in_cv, &folds);
    if (!cfg.augment) data.cache = &cache;
    cfg.seed = derived_seed(config.seed, "train2", {static_cast<std::uint64_t>(id)});
    const std::string dir = layout.step2_dir(id);
    ensure_dir(dir);
    const std::string name(model::to_string(id));
    training::TrainObserver obs = epoch_logger(log, "train2 " + name);
    training::run_step2(step1.params, data, folds, config.cohort.folds, cfg, &obs,
                        [&](int f, const training::FitResult& r) {
                          model::save_checkpoint(layout.step2_fold(id, f), r.best,
                                                 provenance_prefix(id) + "fold" + std::to_string(f) + ":epoch" +
                                                     std::to_string(r.best_epoch));
                          training::write_train_log(join(dir, "fold_" + std::to_string(f) + "_log.jsonl"), r.log);
                          emit(log, "train2 " + name + ": fold " + std::to_string(f) + " best epoch " +
                                        std::to_string(r.best_epoch) + " val loss " + fmt("%.5f", r.best_val_loss));
                        });
  }
}

void cmd_eval(const RunConfig& config, const Logger& log) {
  echo_config(config);
  const Layout layout{config.paths.output_dir};
  Prepared p = prepare(config);
  std::map<std::string, cohort::LongitudinalIndex> covariates;
  for (const auto& ix : p.index) covariates[ix.subject_id] = ix;
  std::unique_ptr<model::FeatureCache> cache;
  for (ScenarioId id : config.eval.scenarios) {
    const std::string name(model::to_string(id));
    std::vector<model::Checkpoint> models;
    for (int f = 0; f < config.cohort.folds; ++f) {
      const std::string path = layout.step2_fold(id, f);
      require(path, "train2 --scenario " + name);
      models.push_back(model::load_checkpoint(path));
      const model::Checkpoint& ck = models.back();
      if (ck.params.config.fingerprint() != models.front().params.config.fingerprint()) {
        throw DataError("'" + path + "' has a config fingerprint that differs from fold 0");
      }
      if (ck.provenance.rfind(provenance_prefix(id) + "fold" + std::to_string(f) + ":", 0) != 0) {
        throw DataError("'" + path + "' holds '" + ck.provenance + "', not a " + name + " fold " +
                        std::to_string(f) + " checkpoint");
      }
      models.back().params.set_backbone_trainable(false);
    }
    const std::uint64_t digest = models.front().params.backbone_digest();
    if (!cache || cache->digest() != digest) cache = std::make_unique<model::FeatureCache>(digest);

    training::DataSet test = subset(p, id, [](const auto& r) { return in_split(r, cohort::Split::test); });
    test.cache = cache.get();
    std::vector<std::vector<double>> fold_probs;
    for (model::Checkpoint& ck : models) fold_probs.push_back(training::predict_probabilities(ck.params, test));
    const auto records = evaluation::ensemble_records(test.ids(), test.labels(), fold_probs);

    // Out-of-fold predictions over the cross-validation subjects.
    std::vector<int> folds;
    training::DataSet cv = subset(p, id, in_cv, &folds);
    cv.cache = cache.get();
    std::vector<evaluation::PredictionRecord> oof;
    for (int f = 0; f < config.cohort.folds; ++f) {
      training::DataSet held{{}, cv.store, cv.cache};
      for (std::size_t i = 0; i < cv.items.size(); ++i) {
        if (folds[i] == f) held.items.push_back(cv.items[i]);
      }
      const std::vector<double> probs = training::predict_probabilities(models[f].params, held);
      for (std::size_t i = 0; i < held.items.size(); ++i) {
        oof.push_back({held.items[i].subject_id, held.items[i].label, {probs[i]}, probs[i]});
      }
    }
    std::sort(oof.begin(), oof.end(), [](const auto& a, const auto& b) { return a.subject_id < b.subject_id; });

    const std::string dir = layout.eval_dir(id);
    ensure_dir(dir);
    evaluation::write_predictions(join(dir, "predictions.tsv"), records);
    evaluation::write_predictions(join(dir, "oof_predictions.tsv"), oof);
    const evaluation::ScenarioResult res = score(config, id, records, covariates);
    std::vector<double> oof_scores;
    std::vector<int> oof_labels;
    for (const auto& r : oof) {
      oof_scores.push_back(r.ensemble);
      oof_labels.push_back(r.label);
    }
    const evaluation::MetricReport oof_metric =
        evaluation::metric_report(oof_scores, oof_labels, boot_config(config, id));
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(evaluation::render_json(evaluation::scenario_report({res})));
    nlohmann::ordered_json out;
    out["scenario"] = name;
    out["test"] = j["rows"][0]["metric"];
    out["test_subgroups"] = j["rows"][0]["subgroups"];
    out["out_of_fold"] = {{"n", oof_metric.n},
                          {"positives", oof_metric.positives},
                          {"auc", oof_metric.auc ? nlohmann::ordered_json(*oof_metric.auc) : nlohmann::ordered_json()},
                          {"formatted", evaluation::format_auc(oof_metric)}};
    write_text(join(dir, "metrics.json"), out.dump(2) + "\n");
    emit(log, "eval " + name + ": test AUC " + evaluation::format_auc(res.metric) + ", out-of-fold AUC " +
                  evaluation::format_auc(oof_metric));
  }
}

void cmd_report(const RunConfig& config, const Logger& log) {
  echo_config(config);
  const Layout layout{config.paths.output_dir};
  const std::vector<cohort::LongitudinalIndex> index = load_indexed_cohort(config);
  std::map<std::string, cohort::LongitudinalIndex> covariates;
  for (const auto& ix : index) covariates[ix.subject_id] = ix;
  std::vector<evaluation::ScenarioResult> results;
  for (ScenarioId id : model::kAllScenarios) {
    const std::string path = join(layout.eval_dir(id), "predictions.tsv");
    if (!fs::exists(path)) continue;
    results.push_back(score(config, id, evaluation::read_predictions(path), covariates));
  }
  if (results.empty()) {
    throw DataError("no predictions under '" + join(layout.root, "eval") + "'; run 'eval' first");
  }
  const evaluation::ScenarioReport report = evaluation::scenario_report(std::move(results));
  ensure_dir(layout.report_dir());
  write_text(join(layout.report_dir(), "report.txt"), evaluation::render_text(report));
  write_text(join(layout.report_dir(), "report.json"), evaluation::render_json(report));
  emit(log, "report: " + std::to_string(report.rows.size()) + " scenario rows -> " + layout.report_dir());
}

}  // namespace longimam::pipeline
