// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifdef LONGIMAM_HAVE_BOOST
#include <boost/multiprecision/cpp_int.hpp>
#endif

#include "longimam/cohort/cohort.hpp"
#include "longimam/cohort/synthetic.hpp"
#include "longimam/errors.hpp"
#include "longimam/evaluation/metrics.hpp"
#include "longimam/evaluation/report.hpp"
#include "longimam/model/checkpoint.hpp"
#include "longimam/model/image_store.hpp"
#include "longimam/model/model.hpp"
#include "longimam/numerics/ops.hpp"
#include "longimam/numerics/optim.hpp"
#include "longimam/pipeline/pipeline.hpp"
#include "longimam/training/training.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace longimam;
using numerics::Parameter;
using numerics::Rng;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.raw(), b.raw(), a.size() * sizeof(double)) == 0;
}

std::string g_workdir;
bool g_verbose = false;

pipeline::Logger progress() {
  if (!g_verbose) return {};
  return [](const std::string& m) { std::fprintf(stderr, "    %s\n", m.c_str()); };
}

model::ModelConfig reduced_model() {
  model::ModelConfig c;
  c.channels = {4, 8, 8, 16, 16, 32};
  c.final_channels = 32;
  c.image_h = 64;
  c.image_w = 64;
  return c;
}

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.channels = {2, 4, 4, 8, 8, 8};
  c.final_channels = 8;
  c.feature_width = 16;
  c.gru_hidden = 16;
  c.head_hidden1 = 16;
  c.head_hidden2 = 8;
  c.image_h = 64;
  c.image_w = 64;
  return c;
}

/// Small on-disk cohort and its store, for the training-loop audits.
struct MiniCohort {
  std::vector<cohort::LongitudinalIndex> index;
  std::unique_ptr<model::ImageStore> store;

  MiniCohort(const std::string& dir, std::size_t subjects, double prevalence, std::uint64_t seed) {
    cohort::SyntheticConfig cfg;
    cfg.subjects = subjects;
    cfg.prevalence = prevalence;
    cfg.min_input_visits = 5;
    cfg.max_input_visits = 5;
    cfg.seed = seed;
    fs::remove_all(dir);
    const auto synth = cohort::generate_synthetic_cohort(cfg, dir);
    for (const auto& s : synth.subjects) index.push_back(*cohort::index_longitudinal(s));
    preprocess::PreprocessConfig pp;
    pp.target_h = 64;
    pp.target_w = 64;
    store = std::make_unique<model::ImageStore>(dir, pp);
  }

  training::DataSet data(model::ScenarioId id, std::size_t begin, std::size_t end) const {
    training::DataSet d;
    d.store = store.get();
    for (std::size_t i = begin; i < end && i < index.size(); ++i)
      d.items.push_back(model::build_scenario_input(index[i], id));
    return d;
  }
};

// ------------------------------------------------------------------ 1
Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  model::LongiMamParams params = model::LongiMamParams::init(reduced_model(), 101);
  Rng rng(102);
  // Shift BN shifts and GRU/head biases off zero so every term is exercised.
  for (Parameter* p : params.parameters())
    if (p->name.find("bias") != std::string::npos || p->name.find(".b_") != std::string::npos ||
        p->name.find("beta") != std::string::npos)
      for (double& v : p->value.data()) v = rng.uniform(-0.1, 0.1);
  const std::size_t batch = 2, steps = 2;
  const Tensor images = longimam::testing::random_tensor({batch * steps * 4, 1, 64, 64}, rng, 0.0, 1.0);
  const std::vector<double> labels{1.0, 0.0}, weights{1.0, 3.0};
  auto build = [&](Tape& tape) {
    model::LongiMamVars vars = model::bind(tape, params);
    Var maps = model::backbone_forward(tape.constant(images), vars, params, numerics::BatchNormMode::train);
    Var logits = model::sequence_head(model::project(maps, vars), batch, steps, vars);
    return numerics::weighted_bce(logits, labels, weights);
  };

  std::map<std::string, std::vector<Parameter*>> groups;
  for (auto& block : params.backbone) {
    groups["backbone.conv"].push_back(&block.weight);
    groups["backbone.bn"].push_back(&block.gamma);
    groups["backbone.bn"].push_back(&block.beta);
  }
  groups["projector"] = {&params.projector_weight, &params.projector_bias};
  groups["gru_cc"] = params.gru_cc.parameters();
  groups["gru_mlo"] = params.gru_mlo.parameters();
  groups["head"] = {&params.fc1_weight, &params.fc1_bias, &params.fc2_weight,
                    &params.fc2_bias,   &params.fc3_weight, &params.fc3_bias};

  const std::vector<Parameter*> all = params.parameters();
  double worst = 0.0;
  std::string worst_where;
  std::size_t min_checked = SIZE_MAX, total = 0, refined = 0;
  for (auto& [name, members] : groups) {
    // Every tensor of the group contributes coordinates; the group total is
    // at least 100.
    std::size_t group_checked = 0;
    for (Parameter* p : members) {
      const std::size_t want = std::max<std::size_t>(100 / members.size() + 1, 12);
      const auto r = longimam::testing::grad_check(build, all, {p}, want, 1e-5, rng, true);
      group_checked += r.checked;
      refined += r.refined;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_where = r.worst;
      }
    }
    if (group_checked < 100) {
      const auto r = longimam::testing::grad_check(build, all, members, 100 - group_checked, 1e-5, rng, true);
      group_checked += r.checked;
      refined += r.refined;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_where = r.worst;
      }
    }
    min_checked = std::min(min_checked, group_checked);
    total += group_checked;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst < 1e-4 && min_checked >= 100 && secs < 120.0;
  o.detail = std::to_string(groups.size()) + " groups, " + std::to_string(total) + " coordinates (min " +
             std::to_string(min_checked) + "/group, " + std::to_string(refined) + " near a kink), max rel error " + fmt("%.2e", worst) + ", " +
             fmt("%.1f", secs) + " s";
  if (!o.pass) o.detail += "; worst at " + worst_where;
  return o;
}

// ------------------------------------------------------------------ 2
Outcome criterion_shapes() {
  model::LongiMamParams params = model::LongiMamParams::init(model::ModelConfig{}, 201);
  Rng rng(202);
  const std::size_t t = 2;
  const Tensor images = longimam::testing::random_tensor({t * 4, 1, 576, 416}, rng, 0.0, 1.0);
  Tape tape;
  model::LongiMamVars vars = model::bind(tape, params);
  Var maps = model::backbone_forward(tape.constant(images), vars, params, numerics::BatchNormMode::eval);
  Var feats = model::project(maps, vars);
  model::HeadTrace trace;
  Var logits = model::sequence_head(feats, 1, t, vars, &trace);
  preprocess::Image one(576, 416, 0.3f);
  const Tensor single = model::extract_features(params, one);
  const bool extent = model::backbone_output_extent(576, 416) == std::pair<std::size_t, std::size_t>{9, 6};
  const bool map_ok = maps.shape() == numerics::Shape{t * 4, 256, 9, 6};
  const bool feat_ok = feats.shape() == numerics::Shape{t * 4, 128} && single.shape() == numerics::Shape{128};
  const bool gru_ok = trace.hidden.shape() == numerics::Shape{1, 256};
  const bool head_ok = logits.shape() == numerics::Shape{1, 1};
  Outcome o;
  o.pass = extent && map_ok && feat_ok && gru_ok && head_ok;
  o.detail = "backbone " + numerics::shape_string(maps.shape()) + ", features " +
             numerics::shape_string(feats.shape()) + ", GRU concat " + numerics::shape_string(trace.hidden.shape()) +
             ", head " + numerics::shape_string(logits.shape());
  return o;
}

// ------------------------------------------------------------------ 3
Outcome criterion_auc() {
  auto pairwise = [](const std::vector<double>& s, const std::vector<int>& y) {
    long long twice = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (y[i] != 1 || y[j] != 0) continue;
        ++pairs;
        twice += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
      }
    return static_cast<double>(twice) / static_cast<double>(2 * pairs);
  };
  std::size_t mismatches = 0, with_ties = 0;
  const std::vector<double> fs{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> fl{0, 0, 1, 1};
  const bool fixture = evaluation::auc(fs, fl) == 0.75 && pairwise(fs, fl) == 0.75;
  Rng rng(301);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng.uniform_index(199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool discrete = inst % 2 == 0;
    const double prevalence = rng.uniform(0.05, 0.95);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = discrete ? static_cast<double>(rng.uniform_index(1 + inst % 12)) / 8.0 : rng.uniform();
      y[i] = rng.uniform() < prevalence;
    }
    // Both classes present, at random positions.
    const std::size_t a = rng.uniform_index(n);
    y[a] = 1;
    y[(a + 1 + rng.uniform_index(n - 1)) % n] = 0;
    std::set<double> distinct(s.begin(), s.end());
    with_ties += distinct.size() < n;
    if (evaluation::auc(s, y) != pairwise(s, y)) ++mismatches;
  }
  Outcome o;
  o.pass = fixture && mismatches == 0;
  o.detail = "fixture " + std::string(fixture ? "0.75" : "wrong") + ", 200 instances (" + std::to_string(with_ties) +
             " with ties), " + std::to_string(mismatches) + " mismatches";
  return o;
}

// ------------------------------------------------------------------ 4
Outcome criterion_weighted_loss() {
  auto bce = [](double x, double y) {
    const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(x)));
    return static_cast<double>(-(y * std::log(p) + (1.0L - y) * std::log(1.0L - p)));
  };
  const std::vector<double> zero{0.0}, one{1.0}, nil{0.0}, w1{1.0}, w3{3.0};
  const double f1 = numerics::weighted_bce_value(zero, one, w1);
  const double f3 = numerics::weighted_bce_value(zero, nil, w3);
  const bool fixtures = std::abs(f1 - 0.693147) < 5e-7 && std::abs(f3 - 2.079442) < 5e-7;

  Rng rng(401);
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t m = 2 + rng.uniform_index(150);
    std::vector<double> logits(m), labels(m), weights(m);
    std::vector<double> rep_logits, rep_labels;
    for (std::size_t i = 0; i < m; ++i) {
      logits[i] = rng.uniform(-8.0, 8.0);
      labels[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
      weights[i] = labels[i] == 1.0 ? 1.0 : 3.0;
      const int copies = labels[i] == 1.0 ? 1 : 3;
      for (int c = 0; c < copies; ++c) {
        rep_logits.push_back(logits[i]);
        rep_labels.push_back(labels[i]);
      }
    }
    const double weighted = numerics::weighted_bce_value(logits, labels, weights);
    long double rep_sum = 0.0L;
    for (std::size_t i = 0; i < rep_logits.size(); ++i) rep_sum += bce(rep_logits[i], rep_labels[i]);
    // Replicated mean rescaled from M' = P + 3N samples back to M.
    const double replicated = static_cast<double>(rep_sum / static_cast<long double>(m));
    worst = std::max(worst, std::abs(weighted - replicated));

    Tape tape;
    Var v = numerics::weighted_bce(tape.constant(Tensor({m}, logits)), labels, weights);
    worst = std::max(worst, std::abs(v.value()[0] - replicated));
  }
  std::vector<double> half(10, 0.0), lab(10, 0.0), w(10, 3.0);
  for (int i = 0; i < 3; ++i) {
    lab[i] = 1.0;
    w[i] = 1.0;
  }
  const double balanced = numerics::weighted_bce_value(half, lab, w);
  const bool analytic = std::abs(balanced - std::log(2.0) * (3.0 + 3.0 * 7.0) / 10.0) < 1e-12;
  Outcome o;
  o.pass = fixtures && analytic && worst < 1e-12;
  o.detail = "w=1 " + fmt("%.6f", f1) + ", w=3 " + fmt("%.6f", f3) + ", replication max |diff| " +
             fmt("%.2e", worst) + " over 200 instances";
  return o;
}

// ------------------------------------------------------------------ 5
Outcome criterion_sampler() {
  const std::string dir = g_workdir + "/c5";
  MiniCohort mc(dir, 96, 0.1, 501);
  std::size_t batches = 0, violations = 0;
  auto audit = [&](std::size_t batch_size, int step) {
    training::TrainConfig cfg;
    cfg.step = step;
    cfg.batch_size = batch_size;
    cfg.fine_tune = step == 2 ? training::FineTune::partial : training::FineTune::full;
    cfg.scenario = step == 2 ? model::ScenarioId::p1c1 : model::ScenarioId::c1;
    cfg.max_epochs = 20;
    cfg.patience = 1000;
    cfg.augment = false;
    cfg.lr_fixed = 1e-3;
    cfg.seed = 502 + batch_size;
    const std::size_t pos = batch_size / 4, neg = batch_size - pos;
    std::set<std::size_t> epochs;
    training::TrainObserver obs;
    obs.on_train_batch = [&](std::size_t epoch, std::size_t, const std::vector<std::string>& ids,
                             std::span<const double> labels, std::span<const double>) {
      ++batches;
      epochs.insert(epoch);
      std::size_t p = 0;
      for (double y : labels) p += y == 1.0;
      if (ids.size() != batch_size || p != pos || labels.size() - p != neg) ++violations;
    };
    const auto train = mc.data(cfg.scenario, 0, 80);
    const auto val = mc.data(cfg.scenario, 80, 96);
    training::fit(model::LongiMamParams::init(tiny_model(), 503), train, val, cfg, &obs);
    if (epochs.size() != 20) ++violations;
  };
  audit(4, 2);
  audit(8, 1);
  // Direct sampler audit over varied label mixes.
  for (std::size_t neg : {3u, 7u, 30u, 101u, 287u})
    for (std::size_t pos : {1u, 2u, 9u, 40u})
      for (std::size_t bs : {4u, 8u})
        for (std::uint64_t epoch = 0; epoch < 20; ++epoch) {
          std::vector<int> labels(neg, 0);
          labels.insert(labels.end(), pos, 1);
          if (neg < bs * 3 / 4) continue;
          Rng rng = Rng::substream(504, "sampler", {epoch, neg, pos, bs});
          for (const auto& b : training::make_balanced_batches(labels, 3, bs, rng)) {
            ++batches;
            std::size_t p = 0;
            for (std::size_t m : b.members) p += labels[m];
            if (b.members.size() != bs || p != bs / 4) ++violations;
          }
        }
  Outcome o;
  o.pass = violations == 0 && batches > 0;
  o.detail = std::to_string(batches) + " batches (20-epoch runs at batch 4 and 8 plus direct draws), " +
             std::to_string(violations) + " violations";
  return o;
}

pipeline::RunConfig small_pipeline_config(const std::string& out, std::uint64_t seed) {
  pipeline::RunConfig c;
  c.seed = seed;
  c.paths.output_dir = out;
  c.synthetic.subjects = 120;
  c.synthetic.prevalence = 0.1;
  c.synthetic.min_input_visits = 5;
  c.synthetic.max_input_visits = 5;
  c.cohort.folds = 3;
  c.preprocess.target_h = 64;
  c.preprocess.target_w = 64;
  c.model = tiny_model();
  c.train1.train.lr_fixed = 1e-3;
  c.train1.train.lr_max = 1e-3;
  c.train1.train.lr_min = 1e-6;
  c.train1.train.max_epochs = 3;
  c.train1.arms = {{training::FineTune::full, training::LrScheme::fixed},
                   {training::FineTune::partial, training::LrScheme::cosine}};
  c.train2.train.lr_fixed = 1e-3;
  c.train2.train.max_epochs = 3;
  c.train2.train.augment = true;
  c.train2.scenarios = {model::ScenarioId::c1, model::ScenarioId::p2c1, model::ScenarioId::p3};
  c.eval.scenarios = c.train2.scenarios;
  c.eval.bootstrap_replicates = 200;
  return c;
}

// ------------------------------------------------------------------ 6
Outcome criterion_freeze() {
  pipeline::RunConfig c = small_pipeline_config(g_workdir + "/c6", 601);
  fs::remove_all(c.paths.output_dir);
  const auto log = progress();
  pipeline::cmd_synth(c, log);
  pipeline::cmd_ingest(c, log);
  pipeline::cmd_split(c, log);
  pipeline::cmd_train1(c, log);
  pipeline::cmd_train2(c, log);
  const pipeline::Layout layout{c.paths.output_dir};
  const model::Checkpoint step1 = model::load_checkpoint(layout.step1_best());
  std::map<std::string, const Tensor*> reference;
  for (const auto& [name, t] : step1.params.named_state())
    if (name.rfind("backbone.", 0) == 0) reference[name] = t;
  std::size_t compared = 0, differing = 0, upper_changed = 0, folds = 0;
  for (model::ScenarioId id : c.train2.scenarios)
    for (int f = 0; f < c.cohort.folds; ++f) {
      const model::Checkpoint ck = model::load_checkpoint(layout.step2_fold(id, f));
      ++folds;
      for (const auto& [name, t] : ck.params.named_state()) {
        if (name.rfind("backbone.", 0) == 0) {
          ++compared;
          differing += !bitwise_equal(*t, *reference.at(name));
        }
      }
      upper_changed += !bitwise_equal(ck.params.fc1_weight.value, step1.params.fc1_weight.value);
    }
  Outcome o;
  o.pass = differing == 0 && compared > 0 && upper_changed == folds;
  o.detail = std::to_string(folds) + " fold checkpoints (augmented step-2 runs), " + std::to_string(compared) +
             " backbone tensors compared, " + std::to_string(differing) + " differ; head updated in " +
             std::to_string(upper_changed) + "/" + std::to_string(folds);
  return o;
}

// ------------------------------------------------------------------ 7
Outcome criterion_adamw() {
  Rng rng(701);
  Parameter p("p", longimam::testing::random_tensor({64}, rng, -2.0, 2.0));
  const Tensor start = p.value;
  const double lr = 1e-5, decay = 1e-4;
  const std::size_t n = 1000;
  numerics::AdamW opt({&p}, {.weight_decay = decay});
  Tensor sequential = start;
  for (std::size_t k = 0; k < n; ++k) {
    opt.zero_grad();
    opt.step(lr);
    for (double& v : sequential.data()) v *= (1.0 - lr * decay);
  }
  const long double factor = std::pow(1.0L - static_cast<long double>(lr) * decay, static_cast<long double>(n));
  double worst = 0.0;
  for (std::size_t i = 0; i < start.size(); ++i) {
    const long double expect = static_cast<long double>(start[i]) * factor;
    worst = std::max(worst, static_cast<double>(std::abs((p.value[i] - expect) / expect)));
  }
  const double tolerance = static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  const bool bitwise = bitwise_equal(p.value, sequential);

  training::TrainConfig cfg;
  cfg.lr_scheme = training::LrScheme::cosine;
  const bool endpoints = cfg.lr(0) == 1e-4 && cfg.lr(cfg.max_epochs) == 1e-7 &&
                         numerics::cosine_lr(0, 40, 1e-4, 1e-7) == 1e-4 &&
                         numerics::cosine_lr(40, 40, 1e-4, 1e-7) == 1e-7;
  Outcome o;
  o.pass = bitwise && worst <= tolerance && endpoints;
  o.detail = std::to_string(n) + " zero-gradient steps: max rel deviation from (1-lr*wd)^n " + fmt("%.2e", worst) +
             " (bound " + fmt("%.1e", tolerance) + "), per-step products " + (bitwise ? "bit-identical" : "differ") +
             "; cosine endpoints " + (endpoints ? "1e-4 / 1e-7 exact" : "wrong");
  return o;
}

// ------------------------------------------------------------------ 8
Outcome criterion_early_stop() {
  auto run = [](const std::vector<double>& losses, std::size_t& best, std::vector<std::size_t>& counters) {
    training::EarlyStopState s{.patience = 15, .min_delta = 1e-4};
    counters.clear();
    for (std::size_t e = 0; e < losses.size(); ++e) {
      const auto d = training::early_stop_update(s, losses[e]);
      counters.push_back(s.epochs_since_improvement);
      if (s.improved) best = e;
      if (d == training::StopDecision::stop) return static_cast<long>(e);
    }
    return -1L;
  };
  // A: real improvement at epoch 3, afterwards only gains of at most 1e-4.
  std::vector<double> a{1.0, 0.9, 0.85, 0.8};
  const double base = 0.8;
  double edge = base - 1e-4;
  while (base - edge > 1e-4) edge = std::nextafter(edge, 1.0);
  const double small_gains[] = {edge, base - 5e-5, base, base + 0.01, base - 1e-5};
  for (std::size_t k = 0; k < 40; ++k) a.push_back(small_gains[k % 5]);
  std::size_t best_a = 0;
  std::vector<std::size_t> ca;
  const long stop_a = run(a, best_a, ca);

  // B: non-improving epochs 1..13, a 2e-4 gain at epoch 14.
  std::vector<double> b{0.5};
  for (int k = 1; k < 14; ++k) b.push_back(0.5 - 5e-5);
  b.push_back(0.5 - 2e-4);
  for (int k = 0; k < 40; ++k) b.push_back(0.5 - 2e-4 + 1e-6 * k);
  std::size_t best_b = 0;
  std::vector<std::size_t> cb;
  const long stop_b = run(b, best_b, cb);
  const bool reset = cb.size() > 14 && cb[13] == 13 && cb[14] == 0;

  Outcome o;
  o.pass = best_a == 3 && stop_a == 18 && best_b == 14 && stop_b == 29 && reset;
  o.detail = "sequence A best " + std::to_string(best_a) + " stop " + std::to_string(stop_a) +
             " (expected 3/18); sequence B reset at 14 " + (reset ? "yes" : "no") + ", stop " +
             std::to_string(stop_b) + " (expected 29)";
  return o;
}

// ------------------------------------------------------------------ 9
Outcome criterion_augmentation() {
  const std::string dir = g_workdir + "/c9";
  MiniCohort mc(dir, 72, 0.1, 901);
  training::TrainConfig cfg;
  cfg.step = 2;
  cfg.fine_tune = training::FineTune::partial;
  cfg.scenario = model::ScenarioId::p4c1;
  cfg.batch_size = 4;
  cfg.max_epochs = 9;
  cfg.patience = 1000;
  cfg.augment = true;
  cfg.lr_fixed = 1e-3;
  cfg.seed = 902;
  struct Key {
    std::string id;
    int side;
    std::size_t epoch;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, preprocess::AugmentationSpec> specs;
  std::size_t reports = 0, inconsistent = 0, wrong_steps = 0;
  training::TrainObserver obs;
  obs.on_augment = [&](const std::string& id, cohort::Side side, std::size_t epoch, std::size_t steps,
                       const preprocess::AugmentationSpec& spec) {
    ++reports;
    if (steps != 5) ++wrong_steps;
    const Key k{id, static_cast<int>(side), epoch};
    auto [it, fresh] = specs.emplace(k, spec);
    if (!fresh && !(it->second == spec)) ++inconsistent;
  };
  model::LongiMamParams init = model::LongiMamParams::init(tiny_model(), 903);
  training::fit(init, mc.data(cfg.scenario, 0, 64), mc.data(cfg.scenario, 64, 72), cfg, &obs);

  // Sample 1,000 triples and verify the applied images timestep by timestep.
  std::vector<Key> keys;
  for (const auto& [k, s] : specs) keys.push_back(k);
  Rng pick(904);
  std::span<Key> view(keys);
  pick.shuffle(view);
  std::size_t checked = 0, image_mismatch = 0;
  std::map<std::string, const cohort::LongitudinalIndex*> by_id;
  for (const auto& ix : mc.index) by_id[ix.subject_id] = &ix;
  for (const Key& k : keys) {
    if (checked == 1000) break;
    ++checked;
    const auto input = model::build_scenario_input(*by_id.at(k.id), cfg.scenario);
    const auto side = static_cast<cohort::Side>(k.side);
    for (cohort::View v : cohort::kViews) {
      std::vector<preprocess::Image> seq;
      for (const auto& exam : input.exams) seq.push_back(mc.store->get(exam.image(side, v)));
      Rng rng = Rng::substream(cfg.seed, "augment", {numerics::fnv1a(k.id), static_cast<std::uint64_t>(k.side), k.epoch});
      const auto out = preprocess::augment_side_sequence(seq, rng);
      if (!(out.spec == specs.at(k))) ++image_mismatch;
      for (std::size_t t = 0; t < seq.size(); ++t)
        if (!(out.images[t] == preprocess::apply_augmentation(seq[t], specs.at(k)))) ++image_mismatch;
    }
  }

  // Left/right independence: identical specs would be a coupling; family
  // co-occurrence is tested against independence with a chi-square statistic.
  std::size_t pairs = 0, identical = 0;
  double table[4][4] = {};
  for (const auto& [k, s] : specs) {
    if (k.side != 0) continue;
    auto it = specs.find(Key{k.id, 1, k.epoch});
    if (it == specs.end()) continue;
    ++pairs;
    identical += s == it->second && s.family != preprocess::AugmentFamily::hflip;
    table[static_cast<int>(s.family)][static_cast<int>(it->second.family)] += 1.0;
  }
  double chi2 = 0.0;
  double rows[4] = {}, cols[4] = {};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      rows[i] += table[i][j];
      cols[j] += table[i][j];
    }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double e = rows[i] * cols[j] / static_cast<double>(pairs);
      if (e > 0) chi2 += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  // 99.9th percentile of chi-square with 9 degrees of freedom.
  const bool independent = identical == 0 && chi2 < 27.88;

  Outcome o;
  o.pass = checked == 1000 && inconsistent == 0 && wrong_steps == 0 && image_mismatch == 0 && independent;
  o.detail = std::to_string(checked) + " triples verified (" + std::to_string(reports) + " reports, " +
             std::to_string(inconsistent + image_mismatch) + " inconsistent); " + std::to_string(pairs) +
             " left/right pairs, " + std::to_string(identical) + " identical, family chi2 " + fmt("%.1f", chi2) +
             " (9 dof)";
  return o;
}

// ------------------------------------------------------------------ 10
double metric_auc(const std::string& run_dir, model::ScenarioId id, const char* section) {
  const pipeline::Layout layout{run_dir};
  const auto j = nlohmann::json::parse(slurp(layout.eval_dir(id) + "/metrics.json"));
  const auto& v = j.at(section).at("auc");
  return v.is_null() ? std::nan("") : v.get<double>();
}

pipeline::RunConfig planted_config(const std::string& out, double precursor) {
  pipeline::RunConfig c;
  c.seed = 1010;
  c.paths.output_dir = out;
  c.synthetic.subjects = 400;
  c.synthetic.prevalence = 0.1;
  c.synthetic.min_input_visits = 5;
  c.synthetic.max_input_visits = 5;
  c.synthetic.precursor_amplitude = precursor;
  c.preprocess.target_h = 64;
  c.preprocess.target_w = 64;
  c.model = reduced_model();
  for (training::TrainConfig* t : {&c.train1.train, &c.train2.train}) {
    t->lr_fixed = 1e-3;
    t->lr_max = 1e-3;
    t->lr_min = 1e-6;
    t->max_epochs = 40;
    t->patience = 15;
  }
  c.train2.train.augment = false;
  return c;
}

Outcome criterion_planted() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto log = progress();
  using model::ScenarioId;
  const std::vector<ScenarioId> priors_only{ScenarioId::p1, ScenarioId::p2, ScenarioId::p3, ScenarioId::p4};

  pipeline::RunConfig sig = planted_config(g_workdir + "/c10_signal", 0.15);
  fs::remove_all(sig.paths.output_dir);
  pipeline::cmd_synth(sig, log);
  pipeline::cmd_ingest(sig, log);
  pipeline::cmd_split(sig, log);
  pipeline::cmd_train1(sig, log);
  pipeline::cmd_train2(sig, log);
  pipeline::cmd_eval(sig, log);
  pipeline::cmd_report(sig, log);

  // Null cohort: same seed without the precursor. Current exams are
  // byte-identical, so the step-1 checkpoint carries over unchanged.
  pipeline::RunConfig null = planted_config(g_workdir + "/c10_null", 0.0);
  null.train2.scenarios = priors_only;
  null.eval.scenarios = priors_only;
  fs::remove_all(null.paths.output_dir);
  pipeline::cmd_synth(null, log);
  pipeline::cmd_ingest(null, log);
  pipeline::cmd_split(null, log);
  const pipeline::Layout ls{sig.paths.output_dir}, ln{null.paths.output_dir};
  std::size_t current_diff = 0, prior_diff = 0;
  for (const auto& ix : pipeline::load_indexed_cohort(sig)) {
    const std::string root_s = sig.paths.output_dir + "/data/", root_n = null.paths.output_dir + "/data/";
    for (const std::string& ref : ix.current.images) current_diff += slurp(root_s + ref) != slurp(root_n + ref);
    if (ix.label == 1) prior_diff += slurp(root_s + ix.priors[0].images[0]) != slurp(root_n + ix.priors[0].images[0]);
  }
  const bool same_split = slurp(ls.splits()) == slurp(ln.splits());
  fs::create_directories(ln.step1_dir());
  fs::copy_file(ls.step1_best(), ln.step1_best(), fs::copy_options::overwrite_existing);
  pipeline::cmd_train2(null, log);
  pipeline::cmd_eval(null, log);

  const double c1 = metric_auc(sig.paths.output_dir, ScenarioId::c1, "test");
  const bool a_ok = c1 >= 0.85;
  const double p2 = metric_auc(sig.paths.output_dir, ScenarioId::p2, "out_of_fold");
  bool null_ok = true;
  std::string null_txt;
  for (ScenarioId id : priors_only) {
    const double v = metric_auc(null.paths.output_dir, id, "out_of_fold");
    null_ok = null_ok && v >= 0.40 && v <= 0.60;
    null_txt += std::string(null_txt.empty() ? "" : " ") + std::string(model::to_string(id)) + "=" + fmt("%.3f", v);
  }
  const bool b_ok = p2 >= 0.65 && null_ok;
  // Non-inferiority over the pooled out-of-fold predictions; the test split
  // holds too few cases to resolve a 0.02 margin. Test values are reported.
  const double c1_oof = metric_auc(sig.paths.output_dir, ScenarioId::c1, "out_of_fold");
  bool c_ok = true;
  std::string c_txt = "1C=" + fmt("%.3f", c1_oof);
  std::string c_test;
  for (ScenarioId id : {ScenarioId::p1c1, ScenarioId::p2c1, ScenarioId::p3c1, ScenarioId::p4c1}) {
    const double v = metric_auc(sig.paths.output_dir, id, "out_of_fold");
    c_ok = c_ok && v >= c1_oof - 0.02;
    c_txt += " " + std::string(model::to_string(id)) + "=" + fmt("%.3f", v);
    c_test += " " + std::string(model::to_string(id)) + "=" + fmt("%.3f", metric_auc(sig.paths.output_dir, id, "test"));
  }
  const double minutes = seconds_since(t0) / 60.0;
  const bool setup_ok = current_diff == 0 && prior_diff > 0 && same_split;
  Outcome o;
  o.pass = a_ok && b_ok && c_ok && setup_ok && minutes <= 60.0;
  o.detail = "(a) 1C test " + fmt("%.3f", c1) + (a_ok ? " ok" : " FAIL") + "; (b) 2P out-of-fold " +
             fmt("%.3f", p2) + ", null " + null_txt + (b_ok ? " ok" : " FAIL") + "; (c) out-of-fold " + c_txt +
             (c_ok ? " ok" : " FAIL") + " [test" + c_test + "]; " + fmt("%.1f", minutes) + " min" +
             (setup_ok ? "" : "; null cohort setup mismatch");
  return o;
}

// ------------------------------------------------------------------ 11
#ifdef LONGIMAM_HAVE_BOOST
using Rational = boost::multiprecision::cpp_rational;

Rational exact(double v) {
  int e = 0;
  const double m = std::frexp(v, &e);
  const auto mant = static_cast<long long>(std::ldexp(m, 53));
  Rational r(mant);
  const int shift = e - 53;
  boost::multiprecision::cpp_int two = 1;
  two <<= std::abs(shift);
  if (shift >= 0) return Rational(r * two);
  return Rational(r / two);
}

/// True when x is the double nearest to q (ties to even).
bool nearest(double x, const Rational& q) {
  const Rational dx = abs(exact(x) - q);
  for (double n : {std::nextafter(x, -INFINITY), std::nextafter(x, INFINITY)}) {
    const Rational dn = abs(exact(n) - q);
    if (dn < dx) return false;
    if (dn == dx && (std::bit_cast<std::uint64_t>(x) & 1u)) return false;
  }
  return true;
}
#endif

Outcome criterion_ensemble() {
  Rng rng(1101);
  std::size_t subjects = 0, wrong_mean = 0, perm_diff = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t folds = 2 + rng.uniform_index(9);
    const std::size_t n = 1 + rng.uniform_index(40);
    std::vector<std::vector<double>> probs(folds, std::vector<double>(n));
    for (auto& f : probs)
      for (double& v : f) v = inst % 5 == 0 ? 0.1 * static_cast<double>(1 + rng.uniform_index(9)) : rng.uniform();
    std::vector<std::string> ids;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("S" + std::to_string(i));
      labels.push_back(static_cast<int>(i % 2));
    }
    const auto recs = evaluation::ensemble_records(ids, labels, probs);
    for (std::size_t i = 0; i < n; ++i) {
      ++subjects;
#ifdef LONGIMAM_HAVE_BOOST
      Rational sum = 0;
      for (std::size_t f = 0; f < folds; ++f) sum += exact(probs[f][i]);
      if (!nearest(recs[i].ensemble, sum / static_cast<long long>(folds))) ++wrong_mean;
#endif
      bool all_equal = true;
      for (std::size_t f = 1; f < folds; ++f) all_equal = all_equal && probs[f][i] == probs[0][i];
      if (all_equal && recs[i].ensemble != probs[0][i]) ++wrong_mean;
    }
    for (int shuffle = 0; shuffle < 10; ++shuffle) {
      std::vector<std::vector<double>> perm = probs;
      std::span<std::vector<double>> view(perm);
      rng.shuffle(view);
      const auto again = evaluation::ensemble_records(ids, labels, perm);
      for (std::size_t i = 0; i < n; ++i)
        perm_diff += std::bit_cast<std::uint64_t>(again[i].ensemble) != std::bit_cast<std::uint64_t>(recs[i].ensemble);
    }
  }
  const std::vector<double> fixture{0.2, 0.4, 0.6};
  const bool fixture_ok = evaluation::exact_mean(fixture) == 0.4;

  std::size_t boots = 0, boot_diff = 0, not_contained = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 40 + rng.uniform_index(160);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const double shift = rng.uniform(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i % 5 == 0;
      s[i] = rng.normal() + shift * y[i];
    }
    const evaluation::BootstrapConfig cfg{.replicates = 1000, .seed = 1102 + static_cast<std::uint64_t>(inst)};
    const auto a = evaluation::bootstrap_ci(s, y, cfg);
    const auto b = evaluation::bootstrap_ci(s, y, cfg);
    ++boots;
    boot_diff += std::memcmp(&a, &b, sizeof a) != 0;
    const double point = evaluation::auc(s, y);
    not_contained += !(a.lo <= point && point <= a.hi);
  }
#ifdef LONGIMAM_HAVE_BOOST
  const std::string oracle = "exact rational oracle";
#else
  const std::string oracle = "constant-input oracle only";
#endif
  Outcome o;
  o.pass = wrong_mean == 0 && perm_diff == 0 && fixture_ok && boot_diff == 0 && not_contained == 0;
  o.detail = std::to_string(subjects) + " ensemble means vs " + oracle + ": " + std::to_string(wrong_mean) +
             " wrong, " + std::to_string(perm_diff) + " permutation differences; " + std::to_string(boots) +
             " bootstrap CIs: " + std::to_string(boot_diff) + " not bit-identical, " + std::to_string(not_contained) +
             " missing the point AUC";
  return o;
}

// ------------------------------------------------------------------ 12
Outcome criterion_pipeline_determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto log = progress();
  std::vector<std::string> dirs;
  for (const char* tag : {"a", "b"}) {
    pipeline::RunConfig c = small_pipeline_config(g_workdir + "/c12_" + tag, 1201);
    fs::remove_all(c.paths.output_dir);
    pipeline::cmd_synth(c, log);
    pipeline::cmd_ingest(c, log);
    pipeline::cmd_split(c, log);
    pipeline::cmd_train1(c, log);
    pipeline::cmd_train2(c, log);
    pipeline::cmd_eval(c, log);
    pipeline::cmd_report(c, log);
    dirs.push_back(c.paths.output_dir);
  }
  std::size_t files = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(dirs[0])) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dirs[0]).string();
    if (rel == "resolved_config.json") continue;  // records the output directory
    ++files;
    if (slurp(entry.path().string()) != slurp(dirs[1] + "/" + rel)) {
      ++differing;
      if (first_diff.empty()) first_diff = rel;
    }
  }
  const bool reports = slurp(dirs[0] + "/report/report.txt") == slurp(dirs[1] + "/report/report.txt") &&
                       slurp(dirs[0] + "/report/report.json") == slurp(dirs[1] + "/report/report.json") &&
                       !slurp(dirs[0] + "/report/report.txt").empty();
  Outcome o;
  o.pass = reports && differing == 0;
  o.detail = std::string("report files ") + (reports ? "identical" : "differ") + "; " + std::to_string(files) +
             " output files compared, " + std::to_string(differing) + " differ" +
             (first_diff.empty() ? "" : " (first: " + first_diff + ")") + "; " + fmt("%.0f", seconds_since(t0)) +
             " s";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> only;
  g_workdir = (fs::temp_directory_path() / "longimam_acceptance").string();
  app.add_option("--criterion", only, "Run only these criteria (1-12)");
  app.add_option("--workdir", g_workdir, "Scratch directory for generated cohorts and runs");
  app.add_flag("-v,--verbose", g_verbose, "Print pipeline progress");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(g_workdir);

  const std::vector<Criterion> criteria{
      {1, "Gradient fidelity", criterion_gradients},
      {2, "Shape contract", criterion_shapes},
      {3, "AUC oracle equivalence", criterion_auc},
      {4, "Weighted loss conformance", criterion_weighted_loss},
      {5, "Sampler law", criterion_sampler},
      {6, "Freeze law", criterion_freeze},
      {7, "AdamW decoupling", criterion_adamw},
      {8, "Early stopping", criterion_early_stop},
      {9, "Augmentation temporal consistency", criterion_augmentation},
      {10, "Synthetic end-to-end", criterion_planted},
      {11, "Ensemble and bootstrap determinism", criterion_ensemble},
      {12, "Pipeline determinism", criterion_pipeline_determinism},
  };
  int failed = 0, ran = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s [%2d] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  if (ran == 0) {
    std::fprintf(stderr, "no criterion selected\n");
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
