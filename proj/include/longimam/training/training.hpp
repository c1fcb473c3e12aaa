// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longimam/model/checkpoint.hpp"
#include "longimam/model/image_store.hpp"
#include "longimam/model/model.hpp"
#include "longimam/model/scenario.hpp"
#include "longimam/numerics/optim.hpp"
#include "longimam/numerics/rng.hpp"
#include "longimam/preprocess/preprocess.hpp"

namespace longimam::training {

using model::LongiMamParams;
using model::ScenarioId;
using model::SequenceInput;

enum class FineTune : std::uint8_t { full, partial };
enum class LrScheme : std::uint8_t { fixed, cosine };
std::string_view to_string(FineTune f);
std::string_view to_string(LrScheme s);
FineTune parse_fine_tune(std::string_view text);
LrScheme parse_lr_scheme(std::string_view text);

struct Arm {
  FineTune fine_tune = FineTune::full;
  LrScheme lr_scheme = LrScheme::fixed;
  /// "full-fixed", "partial-cosine", ...
  std::string name() const;
  static Arm parse(std::string_view text);
};
inline constexpr std::array<Arm, 4> kAllArms{{{FineTune::full, LrScheme::fixed},
                                              {FineTune::full, LrScheme::cosine},
                                              {FineTune::partial, LrScheme::fixed},
                                              {FineTune::partial, LrScheme::cosine}}};

struct TrainConfig {
  int step = 1;
  ScenarioId scenario = ScenarioId::c1;
  FineTune fine_tune = FineTune::full;
  LrScheme lr_scheme = LrScheme::fixed;
  double lr_fixed = 1e-5;
  double lr_max = 1e-4;
  double lr_min = 1e-7;
  std::size_t batch_size = 8;
  double weight_decay = 1e-4;
  std::size_t max_epochs = 40;
  std::size_t patience = 15;
  double min_delta = 1e-4;
  std::size_t neg_per_pos = 3;
  /// Per-side augmentation of training images.
  bool augment = true;
  std::uint64_t seed = 0;

  /// Throws UsageError on inconsistent settings (step 2 must be partial,
  /// batch size divisible by neg_per_pos + 1, ...).
  void validate() const;
  /// Learning rate for 0-based epoch t.
  double lr(std::size_t epoch) const;
};

// ---------------------------------------------------------------- sampling

struct Batch {
  std::vector<std::size_t> members;  // indices into the training set
};

/// One epoch of batches with exactly batch_size/(neg_per_pos+1) positives and
/// the rest negatives in every batch. Negatives are visited once each in
/// shuffled order; a short final batch is topped up with negatives from the
/// start of the same order. Positives cycle through reshuffled passes (drawn
/// with replacement across the epoch). Throws UsageError when there are no
/// positives or fewer negatives than one batch needs.
std::vector<Batch> make_balanced_batches(std::span<const int> labels, std::size_t neg_per_pos,
                                         std::size_t batch_size, numerics::Rng& rng);

// ---------------------------------------------------------- early stopping

enum class StopDecision { proceed, stop };

struct EarlyStopState {
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;
  std::size_t patience = 15;
  double min_delta = 1e-4;
  /// Set by the last update.
  bool improved = false;
};

/// Improvement means best_loss - val_loss > min_delta (strict).
StopDecision early_stop_update(EarlyStopState& state, double val_loss);

// ----------------------------------------------------------- observation

struct EpochRecord;

/// Hooks into the training loop for audits (batch provenance, loss weights,
/// augmentation specs). All members are optional.
struct TrainObserver {
  std::function<void(std::size_t epoch, std::size_t batch, const std::vector<std::string>& subject_ids,
                     std::span<const double> labels, std::span<const double> weights)>
      on_train_batch;
  std::function<void(std::span<const double> labels, std::span<const double> weights)> on_validation;
  std::function<void(const std::string& subject_id, cohort::Side side, std::size_t epoch,
                     std::size_t timesteps, const preprocess::AugmentationSpec& spec)>
      on_augment;
  std::function<void(const EpochRecord& record)> on_epoch;
};

/// Training data bound to the store holding its images. `cache` may be null;
/// it is used only while the backbone is frozen and augmentation is off.
struct DataSet {
  std::vector<SequenceInput> items;
  model::ImageStore* store = nullptr;
  model::FeatureCache* cache = nullptr;

  std::vector<int> labels() const;
  std::vector<std::string> ids() const;
};

// ---------------------------------------------------------------- loops

/// Logits for every item (eval-mode batch norm, no augmentation), in order.
std::vector<double> predict_logits(LongiMamParams& params, const DataSet& data, std::size_t chunk = 16);
std::vector<double> predict_probabilities(LongiMamParams& params, const DataSet& data);

struct ValidationResult {
  double loss = 0.0;
  std::optional<double> auc;
  std::vector<double> probabilities;
};

/// Eq.-style weighted loss with weight neg_weight on negatives and 1 on
/// positives, averaged over all samples; AUC of the probabilities.
ValidationResult validate(LongiMamParams& params, const DataSet& data, double neg_weight,
                          TrainObserver* observer = nullptr);

/// One pass of optimizer steps over `batches` with unit loss weights.
/// Returns the mean batch loss. Throws NumericError on a non-finite loss.
double epoch_train(LongiMamParams& params, const DataSet& data, const std::vector<Batch>& batches,
                   numerics::AdamW& optimizer, double lr, std::size_t epoch, const TrainConfig& config,
                   TrainObserver* observer = nullptr);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_auc;
  double lr = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::optional<double> best_val_auc;
  bool stopped_early = false;
  LongiMamParams best;
};

/// Trains from `init` until max_epochs or early stopping and returns the
/// parameters of the epoch with the lowest validation loss (earliest on ties).
FitResult fit(const LongiMamParams& init, const DataSet& train, const DataSet& val, const TrainConfig& config,
              TrainObserver* observer = nullptr);

/// JSON lines: epoch, train_loss, val_loss, val_auc, lr.
void write_train_log(const std::string& path, const std::vector<EpochRecord>& log);

// ------------------------------------------------------------ protocols

struct ArmResult {
  Arm arm;
  FitResult fit;
  std::optional<double> test_auc;
  std::vector<double> test_probabilities;
};

struct Step1Result {
  std::vector<ArmResult> arms;
  std::size_t winner = 0;
};

/// Highest test AUC; ties go to the lower best validation loss, then to the
/// earlier arm.
std::size_t select_step1_winner(const std::vector<ArmResult>& arms);

/// Trains each arm from the same initial parameters on single-visit inputs.
/// The winner has the highest test AUC; ties go to the lower validation loss.
Step1Result run_step1(const LongiMamParams& init, const DataSet& train, const DataSet& val, const DataSet& test,
                      const std::vector<Arm>& arms, const TrainConfig& base, TrainObserver* observer = nullptr);

struct Step2Result {
  std::vector<FitResult> folds;
};

/// For every fold f: copy the step-1 parameters, freeze the backbone, train
/// on the items whose fold differs from f and validate on fold f.
/// `fold_of[i]` is the fold of data.items[i].
Step2Result run_step2(const LongiMamParams& step1, const DataSet& data, const std::vector<int>& fold_of, int folds,
                      const TrainConfig& config, TrainObserver* observer = nullptr,
                      const std::function<void(int, const FitResult&)>& on_fold = {});

}  // namespace longimam::training
