// SPDX-License-Identifier: Apache-2.0
#include "longimam/pipeline/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "longimam/errors.hpp"

namespace longimam::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

RunConfig::RunConfig() {
  train1.train.step = 1;
  train1.train.batch_size = 8;
  train1.arms.assign(training::kAllArms.begin(), training::kAllArms.end());
  train2.train.step = 2;
  train2.train.fine_tune = training::FineTune::partial;
  train2.train.batch_size = 4;
  train2.scenarios.assign(model::kAllScenarios.begin(), model::kAllScenarios.end());
  eval.scenarios.assign(model::kAllScenarios.begin(), model::kAllScenarios.end());
}

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig m = model;
  m.image_h = preprocess.target_h;
  m.image_w = preprocess.target_w;
  return m;
}

namespace {

/// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError("config: '" + path_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw UsageError("config: unknown key '" + where(key) + "'");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw UsageError("config: bad value for '" + where(key) + "': " + e.what());
    }
  }

  template <typename T, typename Parse>
  void get_parsed(const std::string& key, T& out, Parse parse) {
    std::string text;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, text);
    out = parse(text);
  }

  template <typename T, typename Parse>
  void get_list(const std::string& key, std::vector<T>& out, Parse parse) {
    std::vector<std::string> items;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, items);
    out.clear();
    for (const std::string& s : items) out.push_back(parse(s));
    if (out.empty()) throw UsageError("config: '" + where(key) + "' must not be empty");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(j_.contains(key) ? j_.at(key) : kEmpty, where(key));
  }

 private:
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  static inline const json kEmpty = json::object();
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(Section& s, training::TrainConfig& t) {
  s.get("lr_fixed", t.lr_fixed);
  s.get("lr_max", t.lr_max);
  s.get("lr_min", t.lr_min);
  s.get("batch_size", t.batch_size);
  s.get("weight_decay", t.weight_decay);
  s.get("max_epochs", t.max_epochs);
  s.get("patience", t.patience);
  s.get("min_delta", t.min_delta);
  s.get("neg_per_pos", t.neg_per_pos);
  s.get("augment", t.augment);
}

ordered_json train_json(const training::TrainConfig& t) {
  ordered_json j;
  j["lr_fixed"] = t.lr_fixed;
  j["lr_max"] = t.lr_max;
  j["lr_min"] = t.lr_min;
  j["batch_size"] = t.batch_size;
  j["weight_decay"] = t.weight_decay;
  j["max_epochs"] = t.max_epochs;
  j["patience"] = t.patience;
  j["min_delta"] = t.min_delta;
  j["neg_per_pos"] = t.neg_per_pos;
  j["augment"] = t.augment;
  return j;
}

std::vector<std::string> scenario_names(const std::vector<model::ScenarioId>& ids) {
  std::vector<std::string> out;
  for (model::ScenarioId id : ids) out.emplace_back(model::to_string(id));
  return out;
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  {
    Section s(root, "");
    int version = kConfigVersion;
    s.get("version", version);
    if (version != kConfigVersion) throw UsageError("config version " + std::to_string(version) + " is not supported");
    s.get("seed", c.seed);
    {
      Section p = s.sub("paths");
      p.get("output_dir", c.paths.output_dir);
      p.get("manifest", c.paths.manifest);
    }
    {
      Section p = s.sub("synthetic");
      cohort::SyntheticConfig& y = c.synthetic;
      p.get("subjects", y.subjects);
      p.get("prevalence", y.prevalence);
      p.get("image_height", y.image_height);
      p.get("image_width", y.image_width);
      p.get("min_input_visits", y.min_input_visits);
      p.get("max_input_visits", y.max_input_visits);
      p.get("lesion_amplitude", y.lesion_amplitude);
      p.get("lesion_sigma", y.lesion_sigma);
      p.get("precursor_amplitude", y.precursor_amplitude);
      p.get("asymmetry", y.asymmetry);
      p.get("noise", y.noise);
      p.get("density_drift", y.density_drift);
    }
    {
      Section p = s.sub("cohort");
      p.get("min_visits", c.cohort.rules.min_visits);
      p.get("retained_visits", c.cohort.rules.retained_visits);
      p.get("min_interval_days", c.cohort.rules.min_interval_days);
      p.get("min_start_age", c.cohort.rules.min_start_age);
      p.get("max_start_age", c.cohort.rules.max_start_age);
      p.get("split_ratios", c.cohort.split_ratios);
      p.get("folds", c.cohort.folds);
    }
    {
      Section p = s.sub("preprocess");
      p.get("target_h", c.preprocess.target_h);
      p.get("target_w", c.preprocess.target_w);
      p.get("background_threshold", c.preprocess.background_threshold);
      p.get("window_center", c.preprocess.window.center);
      p.get("window_width", c.preprocess.window.width);
    }
    {
      Section p = s.sub("model");
      p.get("channels", c.model.channels);
      p.get("final_channels", c.model.final_channels);
      p.get("feature_width", c.model.feature_width);
      p.get("gru_hidden", c.model.gru_hidden);
      p.get("head_hidden1", c.model.head_hidden1);
      p.get("head_hidden2", c.model.head_hidden2);
    }
    {
      Section p = s.sub("train1");
      read_train(p, c.train1.train);
      p.get_list("arms", c.train1.arms, [](const std::string& a) { return training::Arm::parse(a); });
    }
    {
      Section p = s.sub("train2");
      read_train(p, c.train2.train);
      p.get_list("scenarios", c.train2.scenarios, [](const std::string& a) { return model::parse_scenario(a); });
    }
    {
      Section p = s.sub("eval");
      p.get("bootstrap_replicates", c.eval.bootstrap_replicates);
      p.get("level", c.eval.level);
      p.get("age_cutoff", c.eval.age_cutoff);
      p.get("subgroups", c.eval.subgroups);
      p.get_list("scenarios", c.eval.scenarios, [](const std::string& a) { return model::parse_scenario(a); });
    }
  }

  if (c.model.channels.size() != 6) throw UsageError("config: model.channels must list six widths");
  if (c.preprocess.target_h < 64 || c.preprocess.target_w < 64) {
    throw UsageError("config: preprocess target extents must be >= 64");
  }
  if (!(c.synthetic.prevalence > 0.0 && c.synthetic.prevalence < 1.0)) {
    throw UsageError("config: synthetic.prevalence must lie in (0,1)");
  }
  if (c.synthetic.min_input_visits > c.synthetic.max_input_visits || c.synthetic.min_input_visits == 0) {
    throw UsageError("config: synthetic visit range is empty");
  }
  const double ratio_sum = c.cohort.split_ratios[0] + c.cohort.split_ratios[1] + c.cohort.split_ratios[2];
  if (std::abs(ratio_sum - 1.0) > 1e-9) throw UsageError("config: cohort.split_ratios must sum to 1");
  if (c.cohort.folds < 2) throw UsageError("config: cohort.folds must be at least 2");
  if (c.eval.bootstrap_replicates < 100) throw UsageError("config: eval.bootstrap_replicates must be >= 100");
  c.train1.train.validate();
  c.train2.train.validate();
  return c;
}

std::string RunConfig::to_json() const {
  ordered_json j;
  j["version"] = kConfigVersion;
  j["seed"] = seed;
  j["paths"] = {{"output_dir", paths.output_dir}, {"manifest", paths.manifest}};
  ordered_json y;
  y["subjects"] = synthetic.subjects;
  y["prevalence"] = synthetic.prevalence;
  y["image_height"] = synthetic.image_height;
  y["image_width"] = synthetic.image_width;
  y["min_input_visits"] = synthetic.min_input_visits;
  y["max_input_visits"] = synthetic.max_input_visits;
  y["lesion_amplitude"] = synthetic.lesion_amplitude;
  y["lesion_sigma"] = synthetic.lesion_sigma;
  y["precursor_amplitude"] = synthetic.precursor_amplitude;
  y["asymmetry"] = synthetic.asymmetry;
  y["noise"] = synthetic.noise;
  y["density_drift"] = synthetic.density_drift;
  j["synthetic"] = y;
  ordered_json co;
  co["min_visits"] = cohort.rules.min_visits;
  co["retained_visits"] = cohort.rules.retained_visits;
  co["min_interval_days"] = cohort.rules.min_interval_days;
  co["min_start_age"] = cohort.rules.min_start_age;
  co["max_start_age"] = cohort.rules.max_start_age;
  co["split_ratios"] = cohort.split_ratios;
  co["folds"] = cohort.folds;
  j["cohort"] = co;
  ordered_json pp;
  pp["target_h"] = preprocess.target_h;
  pp["target_w"] = preprocess.target_w;
  pp["background_threshold"] = preprocess.background_threshold;
  pp["window_center"] = preprocess.window.center;
  pp["window_width"] = preprocess.window.width;
  j["preprocess"] = pp;
  ordered_json m;
  m["channels"] = model.channels;
  m["final_channels"] = model.final_channels;
  m["feature_width"] = model.feature_width;
  m["gru_hidden"] = model.gru_hidden;
  m["head_hidden1"] = model.head_hidden1;
  m["head_hidden2"] = model.head_hidden2;
  j["model"] = m;
  ordered_json t1 = train_json(train1.train);
  std::vector<std::string> arms;
  for (const training::Arm& a : train1.arms) arms.push_back(a.name());
  t1["arms"] = arms;
  j["train1"] = t1;
  ordered_json t2 = train_json(train2.train);
  t2["scenarios"] = scenario_names(train2.scenarios);
  j["train2"] = t2;
  ordered_json e;
  e["bootstrap_replicates"] = eval.bootstrap_replicates;
  e["level"] = eval.level;
  e["age_cutoff"] = eval.age_cutoff;
  e["subgroups"] = eval.subgroups;
  e["scenarios"] = scenario_names(eval.scenarios);
  j["eval"] = e;
  return j.dump(2) + "\n";
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return RunConfig::from_json(ss.str());
}

}  // namespace longimam::pipeline
