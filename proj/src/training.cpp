// SPDX-License-Identifier: Apache-2.0
#include "longimam/training/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "longimam/errors.hpp"
#include "longimam/evaluation/metrics.hpp"
#include "longimam/numerics/kernels.hpp"
#include "longimam/numerics/optim.hpp"

namespace longimam::training {

using model::LongiMamVars;
using numerics::Rng;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

std::string_view to_string(FineTune f) { return f == FineTune::full ? "full" : "partial"; }
std::string_view to_string(LrScheme s) { return s == LrScheme::fixed ? "fixed" : "cosine"; }

FineTune parse_fine_tune(std::string_view text) {
  if (text == "full") return FineTune::full;
  if (text == "partial") return FineTune::partial;
  throw UsageError("fine_tune must be 'full' or 'partial', got '" + std::string(text) + "'");
}

LrScheme parse_lr_scheme(std::string_view text) {
  if (text == "fixed") return LrScheme::fixed;
  if (text == "cosine") return LrScheme::cosine;
  throw UsageError("lr_scheme must be 'fixed' or 'cosine', got '" + std::string(text) + "'");
}

std::string Arm::name() const { return std::string(to_string(fine_tune)) + "-" + std::string(to_string(lr_scheme)); }

Arm Arm::parse(std::string_view text) {
  const std::size_t dash = text.find('-');
  if (dash == std::string_view::npos) throw UsageError("arm must look like 'full-fixed', got '" + std::string(text) + "'");
  return {parse_fine_tune(text.substr(0, dash)), parse_lr_scheme(text.substr(dash + 1))};
}

void TrainConfig::validate() const {
  if (step != 1 && step != 2) throw UsageError("step must be 1 or 2");
  if (step == 2 && fine_tune != FineTune::partial) throw UsageError("step 2 trains with a frozen backbone (partial)");
  if (step == 1 && scenario != ScenarioId::c1) throw UsageError("step 1 trains on the current visit only (1C)");
  if (neg_per_pos == 0) throw UsageError("neg_per_pos must be positive");
  if (batch_size == 0 || batch_size % (neg_per_pos + 1) != 0) {
    throw UsageError("batch_size " + std::to_string(batch_size) + " is not divisible by neg_per_pos + 1 = " +
                     std::to_string(neg_per_pos + 1));
  }
  if (max_epochs == 0) throw UsageError("max_epochs must be positive");
  if (patience == 0) throw UsageError("patience must be positive");
  if (!(lr_fixed >= 0) || !(lr_max >= 0) || !(lr_min >= 0) || lr_min > lr_max) {
    throw UsageError("learning rates must be non-negative with lr_min <= lr_max");
  }
  if (!(weight_decay >= 0)) throw UsageError("weight_decay must be non-negative");
}

double TrainConfig::lr(std::size_t epoch) const {
  if (lr_scheme == LrScheme::fixed) return lr_fixed;
  return numerics::cosine_lr(static_cast<double>(epoch), static_cast<double>(max_epochs), lr_max, lr_min);
}

std::vector<Batch> make_balanced_batches(std::span<const int> labels, std::size_t neg_per_pos,
                                         std::size_t batch_size, Rng& rng) {
  if (neg_per_pos == 0 || batch_size % (neg_per_pos + 1) != 0) {
    throw UsageError("batch size must be a multiple of neg_per_pos + 1");
  }
  const std::size_t pos_per_batch = batch_size / (neg_per_pos + 1);
  const std::size_t neg_per_batch = batch_size - pos_per_batch;
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty()) throw UsageError("balanced sampler needs at least one positive subject");
  if (neg.size() < neg_per_batch) {
    throw UsageError("balanced sampler needs at least " + std::to_string(neg_per_batch) + " negative subjects");
  }
  rng.shuffle(std::span<std::size_t>(neg));
  const std::size_t n_batches = (neg.size() + neg_per_batch - 1) / neg_per_batch;

  std::vector<std::size_t> pos_order;
  std::size_t pos_cursor = 0;
  auto next_positive = [&] {
    if (pos_cursor == pos_order.size()) {
      pos_order = pos;
      rng.shuffle(std::span<std::size_t>(pos_order));
      pos_cursor = 0;
    }
    return pos_order[pos_cursor++];
  };

  std::vector<Batch> batches(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::vector<std::size_t>& m = batches[b].members;
    for (std::size_t k = 0; k < neg_per_batch; ++k) m.push_back(neg[(b * neg_per_batch + k) % neg.size()]);
    for (std::size_t k = 0; k < pos_per_batch; ++k) m.push_back(next_positive());
    rng.shuffle(std::span<std::size_t>(m));
  }
  return batches;
}

StopDecision early_stop_update(EarlyStopState& state, double val_loss) {
  state.improved = state.best_loss - val_loss > state.min_delta;
  if (state.improved) {
    state.best_loss = val_loss;
    state.epochs_since_improvement = 0;
  } else {
    ++state.epochs_since_improvement;
  }
  return state.epochs_since_improvement >= state.patience ? StopDecision::stop : StopDecision::proceed;
}

std::vector<int> DataSet::labels() const {
  std::vector<int> out;
  for (const SequenceInput& s : items) out.push_back(s.label);
  return out;
}

std::vector<std::string> DataSet::ids() const {
  std::vector<std::string> out;
  for (const SequenceInput& s : items) out.push_back(s.subject_id);
  return out;
}

namespace {

struct AugmentContext {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  TrainObserver* observer = nullptr;
};

/// Logits [B,1] for the given members. `training` selects train-mode batch
/// norm for a trainable backbone; `augment` is honoured only when non-null.
Var forward_batch(Tape& tape, const LongiMamVars& vars, LongiMamParams& params, const DataSet& data,
                  std::span<const std::size_t> members, bool training, const AugmentContext* augment,
                  bool cache_ok) {
  if (members.empty()) throw UsageError("empty batch");
  const std::size_t batch = members.size();
  const std::size_t steps = data.items[members[0]].exams.size();
  if (steps == 0) throw DataError("subject " + data.items[members[0]].subject_id + " has an empty sequence");
  std::vector<const preprocess::Image*> images;
  images.reserve(batch * steps * 4);
  for (std::size_t m : members) {
    const SequenceInput& item = data.items[m];
    if (item.exams.size() != steps) throw DataError("sequences in one batch differ in length");
    auto seq = model::sequence_images(*data.store, item);
    images.insert(images.end(), seq.begin(), seq.end());
  }

  std::vector<preprocess::Image> augmented;
  if (augment) {
    augmented.reserve(images.size());
    for (std::size_t b = 0; b < batch; ++b) {
      const std::string& id = data.items[members[b]].subject_id;
      for (cohort::Side side : cohort::kSides) {
        std::vector<preprocess::Image> side_images;
        std::vector<std::size_t> slots;
        for (std::size_t t = 0; t < steps; ++t) {
          for (cohort::View view : cohort::kViews) {
            const std::size_t k = (b * steps + t) * 4 + cohort::image_slot(side, view);
            side_images.push_back(*images[k]);
            slots.push_back(k);
          }
        }
        Rng rng = Rng::substream(augment->seed, "augment",
                                 {numerics::fnv1a(id), static_cast<std::uint64_t>(side), augment->epoch});
        preprocess::AugmentedSequence seq = preprocess::augment_side_sequence(side_images, rng);
        if (augment->observer && augment->observer->on_augment) {
          augment->observer->on_augment(id, side, augment->epoch, steps, seq.spec);
        }
        for (std::size_t j = 0; j < slots.size(); ++j) {
          augmented.push_back(std::move(seq.images[j]));
          images[slots[j]] = &augmented.back();
        }
      }
    }
  }

  Var backbone_out;
  if (params.backbone_trainable() && training) {
    Var x = tape.constant(model::stack_images(images));
    backbone_out = model::backbone_forward(x, vars, params, numerics::BatchNormMode::train);
  } else if (!params.backbone_trainable() && cache_ok && !augment && data.cache) {
    std::vector<const Tensor*> feats;
    feats.reserve(images.size());
    for (std::size_t m : members) {
      const SequenceInput& item = data.items[m];
      for (const cohort::Exam& e : item.exams) {
        for (const std::string& ref : e.images) feats.push_back(&data.cache->get(ref, *data.store, params));
      }
    }
    const numerics::Shape& s = feats.front()->shape();
    Tensor stacked({feats.size(), s[0], s[1], s[2]});
    double* dst = stacked.raw();
    for (const Tensor* f : feats) dst = std::copy(f->raw(), f->raw() + f->size(), dst);
    backbone_out = tape.constant(std::move(stacked));
  } else {
    backbone_out = tape.constant(model::backbone_infer(params, model::stack_images(images)));
  }
  Var features = model::project(backbone_out, vars);
  return model::sequence_head(features, batch, steps, vars);
}

bool cache_valid(const LongiMamParams& params, const DataSet& data) {
  return data.cache && !params.backbone_trainable() && data.cache->digest() == params.backbone_digest();
}

}  // namespace

std::vector<double> predict_logits(LongiMamParams& params, const DataSet& data, std::size_t chunk) {
  const bool cache_ok = cache_valid(params, data);
  // Group by sequence length so a chunk never mixes lengths.
  std::vector<std::size_t> order(data.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> logits(data.items.size());
  for (std::size_t start = 0; start < order.size(); start += chunk) {
    const std::size_t end = std::min(order.size(), start + chunk);
    std::vector<std::size_t> members;
    for (std::size_t i = start; i < end; ++i) {
      if (!members.empty() && data.items[order[i]].exams.size() != data.items[members[0]].exams.size()) {
        Tape tape;
        LongiMamVars vars = model::bind(tape, params);
        Var y = forward_batch(tape, vars, params, data, members, false, nullptr, cache_ok);
        for (std::size_t k = 0; k < members.size(); ++k) logits[members[k]] = y.value()[k];
        members.clear();
      }
      members.push_back(order[i]);
    }
    Tape tape;
    LongiMamVars vars = model::bind(tape, params);
    Var y = forward_batch(tape, vars, params, data, members, false, nullptr, cache_ok);
    for (std::size_t k = 0; k < members.size(); ++k) logits[members[k]] = y.value()[k];
  }
  return logits;
}

std::vector<double> predict_probabilities(LongiMamParams& params, const DataSet& data) {
  std::vector<double> p = predict_logits(params, data);
  for (double& v : p) v = numerics::sigmoid(v);
  return p;
}

ValidationResult validate(LongiMamParams& params, const DataSet& data, double neg_weight, TrainObserver* observer) {
  ValidationResult r;
  const std::vector<double> logits = predict_logits(params, data);
  std::vector<double> labels, weights;
  std::vector<int> int_labels = data.labels();
  for (int y : int_labels) {
    labels.push_back(static_cast<double>(y));
    weights.push_back(y == 1 ? 1.0 : neg_weight);
  }
  if (observer && observer->on_validation) observer->on_validation(labels, weights);
  r.loss = numerics::weighted_bce_value(logits, labels, weights);
  for (double x : logits) r.probabilities.push_back(numerics::sigmoid(x));
  r.auc = evaluation::try_auc(r.probabilities, int_labels);
  return r;
}

double epoch_train(LongiMamParams& params, const DataSet& data, const std::vector<Batch>& batches,
                   numerics::AdamW& optimizer, double lr, std::size_t epoch, const TrainConfig& config,
                   TrainObserver* observer) {
  const bool cache_ok = cache_valid(params, data);
  AugmentContext aug{config.seed, epoch, observer};
  double total = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const std::vector<std::size_t>& members = batches[b].members;
    std::vector<double> labels, weights(members.size(), 1.0);
    std::vector<std::string> ids;
    for (std::size_t m : members) {
      labels.push_back(static_cast<double>(data.items[m].label));
      ids.push_back(data.items[m].subject_id);
    }
    if (observer && observer->on_train_batch) observer->on_train_batch(epoch, b, ids, labels, weights);
    Tape tape;
    LongiMamVars vars = model::bind(tape, params);
    Var logits = forward_batch(tape, vars, params, data, members, true, config.augment ? &aug : nullptr, cache_ok);
    Var loss = numerics::weighted_bce(logits, labels, weights);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      std::string who;
      for (const std::string& id : ids) who += (who.empty() ? "" : ",") + id;
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(b) + " (subjects " + who + ")");
    }
    optimizer.zero_grad();
    tape.backward(loss);
    optimizer.step(lr);
    total += value;
  }
  return batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
}

FitResult fit(const LongiMamParams& init, const DataSet& train, const DataSet& val, const TrainConfig& config,
              TrainObserver* observer) {
  config.validate();
  if (!train.store || !val.store) throw UsageError("data sets need an image store");
  LongiMamParams params = init;
  params.set_backbone_trainable(config.step == 1 && config.fine_tune == FineTune::full);
  numerics::AdamW optimizer(params.parameters(), {.weight_decay = config.weight_decay});
  EarlyStopState stop{.patience = config.patience, .min_delta = config.min_delta};
  const std::vector<int> labels = train.labels();

  FitResult result;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng sampler = Rng::substream(config.seed, "sampler", {epoch});
    const std::vector<Batch> batches = make_balanced_batches(labels, config.neg_per_pos, config.batch_size, sampler);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = config.lr(epoch);
    rec.train_loss = epoch_train(params, train, batches, optimizer, rec.lr, epoch, config, observer);
    const ValidationResult v = validate(params, val, static_cast<double>(config.neg_per_pos), observer);
    rec.val_loss = v.loss;
    rec.val_auc = v.auc;
    result.log.push_back(rec);
    if (observer && observer->on_epoch) observer->on_epoch(rec);
    if (v.loss < result.best_val_loss) {
      result.best_val_loss = v.loss;
      result.best_val_auc = v.auc;
      result.best_epoch = epoch;
      result.best = params;
    }
    if (early_stop_update(stop, v.loss) == StopDecision::stop) {
      result.stopped_early = true;
      break;
    }
  }
  if (result.best.backbone.empty()) {
    throw NumericError("validation loss was never finite; no checkpoint selected");
  }
  return result;
}

void write_train_log(const std::string& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log '" + path + "'");
  for (const EpochRecord& r : log) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["val_auc"] = r.val_auc ? nlohmann::ordered_json(*r.val_auc) : nlohmann::ordered_json(nullptr);
    j["lr"] = r.lr;
    out << j.dump() << '\n';
  }
}

std::size_t select_step1_winner(const std::vector<ArmResult>& arms) {
  std::size_t winner = 0;
  for (std::size_t i = 1; i < arms.size(); ++i) {
    const double a = arms[i].test_auc.value_or(-1.0), w = arms[winner].test_auc.value_or(-1.0);
    if (a > w || (a == w && arms[i].fit.best_val_loss < arms[winner].fit.best_val_loss)) winner = i;
  }
  return winner;
}

Step1Result run_step1(const LongiMamParams& init, const DataSet& train, const DataSet& val, const DataSet& test,
                      const std::vector<Arm>& arms, const TrainConfig& base, TrainObserver* observer) {
  if (arms.empty()) throw UsageError("no step-1 arms selected");
  Step1Result result;
  for (const Arm& arm : arms) {
    TrainConfig cfg = base;
    cfg.step = 1;
    cfg.fine_tune = arm.fine_tune;
    cfg.lr_scheme = arm.lr_scheme;
    ArmResult r{arm, fit(init, train, val, cfg, observer), std::nullopt, {}};
    r.test_probabilities = predict_probabilities(r.fit.best, test);
    r.test_auc = evaluation::try_auc(r.test_probabilities, test.labels());
    result.arms.push_back(std::move(r));
  }
  result.winner = select_step1_winner(result.arms);
  return result;
}

Step2Result run_step2(const LongiMamParams& step1, const DataSet& data, const std::vector<int>& fold_of, int folds,
                      const TrainConfig& config, TrainObserver* observer,
                      const std::function<void(int, const FitResult&)>& on_fold) {
  if (fold_of.size() != data.items.size()) throw UsageError("fold assignment does not cover the data set");
  if (folds < 2) throw UsageError("step 2 needs at least two folds");
  TrainConfig cfg = config;
  cfg.step = 2;
  cfg.fine_tune = FineTune::partial;
  Step2Result result;
  for (int f = 0; f < folds; ++f) {
    DataSet train{{}, data.store, data.cache};
    DataSet val{{}, data.store, data.cache};
    for (std::size_t i = 0; i < data.items.size(); ++i) {
      if (fold_of[i] < 0 || fold_of[i] >= folds) throw UsageError("fold index out of range");
      (fold_of[i] == f ? val : train).items.push_back(data.items[i]);
    }
    cfg.seed = Rng::substream(config.seed, "fold", {static_cast<std::uint64_t>(f)}).next_u64();
    FitResult r = fit(step1, train, val, cfg, observer);
    r.best.set_backbone_trainable(false);
    if (on_fold) on_fold(f, r);
    result.folds.push_back(std::move(r));
  }
  return result;
}

}  // namespace longimam::training
