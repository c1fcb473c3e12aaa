// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace longimam::evaluation {

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
/// ties counted one half. Throws NumericError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// nullopt instead of throwing when a class is missing.
std::optional<double> try_auc(std::span<const double> scores, std::span<const int> labels);

/// Correctly rounded sum of the inputs (independent of their order).
double exact_sum(std::span<const double> values);

/// The arithmetic mean rounded once to the nearest double, so it depends only
/// on the multiset of values and a constant input returns that constant.
double exact_mean(std::span<const double> values);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapConfig {
  std::size_t replicates = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  /// Redraws allowed per replicate when a resample lacks a class.
  std::size_t max_attempts = 1000;
};

/// Percentile interval of the AUC over subject-level resamples with
/// replacement. Replicate b draws from its own substream, so the result does
/// not depend on evaluation order. Throws UsageError when replicates < 100 and
/// NumericError when a replicate cannot obtain both classes.
ConfidenceInterval bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                                const BootstrapConfig& config);

/// Linear-interpolated quantile of sorted data, q in [0,1].
double quantile_sorted(std::span<const double> sorted, double q);

}  // namespace longimam::evaluation
