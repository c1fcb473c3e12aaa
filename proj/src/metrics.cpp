// SPDX-License-Identifier: Apache-2.0
#include "longimam/evaluation/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "longimam/errors.hpp"
#include "longimam/numerics/rng.hpp"

namespace longimam::evaluation {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw UsageError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive ranks with average ranks for ties; ranks are doubled to
  // stay integral.
  std::uint64_t pos = 0, neg = 0, rank_sum2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t avg2 = (i + 1) + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        ++pos;
        rank_sum2 += avg2;
      } else {
        ++neg;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw NumericError("AUC undefined: need both positive and negative subjects");
  // U = R_pos - pos(pos+1)/2; counted in halves.
  const std::uint64_t u2 = rank_sum2 - pos * (pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::optional<double> try_auc(std::span<const double> scores, std::span<const int> labels) {
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find_if(labels.begin(), labels.end(), [](int y) { return y != 1; }) != labels.end();
  if (!has_pos || !has_neg) return std::nullopt;
  return auc(scores, labels);
}

namespace {

// Shewchuk partials: a non-overlapping expansion whose exact sum is the sum
// of everything added so far.
void grow(std::vector<double>& partials, double x) {
  std::size_t i = 0;
  for (double y : partials) {
    if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials[i++] = lo;
    x = hi;
  }
  partials.resize(i);
  partials.push_back(x);
}

// Correctly rounded sum of an expansion (half-even on exact ties).
double round_expansion(const std::vector<double>& partials) {
  if (partials.empty()) return 0.0;
  std::size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

std::vector<double> expansion(std::span<const double> values) {
  std::vector<double> partials;
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in exact summation");
    grow(partials, v);
  }
  return partials;
}

// Sign of sum(partials) - n * (q + d), computed exactly.
int residual_sign(std::vector<double> partials, double n, double q, double d) {
  for (double x : {q, d}) {
    const double hi = n * x;
    grow(partials, -hi);
    grow(partials, -std::fma(n, x, -hi));
  }
  const double r = round_expansion(partials);
  return (r > 0) - (r < 0);
}

}  // namespace

double exact_sum(std::span<const double> values) { return round_expansion(expansion(values)); }

double exact_mean(std::span<const double> values) {
  if (values.empty()) throw UsageError("mean of an empty set");
  const std::vector<double> partials = expansion(values);
  const double n = static_cast<double>(values.size());
  double q = round_expansion(partials) / n;
  // q is within an ulp or two of the exact mean; step towards it by
  // comparing the exact sum against n times each neighbouring midpoint.
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 4; ++iter) {
    const double up = std::nextafter(q, inf);
    const double down = std::nextafter(q, -inf);
    const int s_up = residual_sign(partials, n, q, (up - q) / 2.0);
    const int s_down = residual_sign(partials, n, q, (down - q) / 2.0);
    const bool odd = (std::bit_cast<std::uint64_t>(q) & 1) != 0;
    if (s_up > 0 || (s_up == 0 && odd)) {
      q = up;
    } else if (s_down < 0 || (s_down == 0 && odd)) {
      q = down;
    } else {
      break;
    }
  }
  return q;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw UsageError("quantile of an empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

ConfidenceInterval bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                                const BootstrapConfig& config) {
  if (config.replicates < 100) throw UsageError("bootstrap needs at least 100 replicates");
  if (!(config.level > 0.0 && config.level < 1.0)) throw UsageError("bootstrap level must lie in (0,1)");
  if (!try_auc(scores, labels)) throw NumericError("bootstrap: both classes must be present");
  const std::size_t n = scores.size();
  std::vector<double> values(config.replicates);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t b = 0; b < config.replicates; ++b) {
    bool ok = false;
    for (std::size_t attempt = 0; attempt < config.max_attempts && !ok; ++attempt) {
      numerics::Rng rng = numerics::Rng::substream(config.seed, "bootstrap", {b, attempt});
      bool pos = false, neg = false;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.uniform_index(n);
        s[i] = scores[k];
        y[i] = labels[k];
        (y[i] == 1 ? pos : neg) = true;
      }
      ok = pos && neg;
    }
    if (!ok) {
      throw NumericError("bootstrap replicate " + std::to_string(b) + " lacked a class after " +
                         std::to_string(config.max_attempts) + " attempts");
    }
    values[b] = auc(s, y);
  }
  std::sort(values.begin(), values.end());
  const double alpha = (1.0 - config.level) / 2.0;
  return {quantile_sorted(values, alpha), quantile_sorted(values, 1.0 - alpha)};
}

}  // namespace longimam::evaluation
