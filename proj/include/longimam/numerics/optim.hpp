// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "longimam/numerics/tensor.hpp"

namespace longimam::numerics {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay over a fixed parameter list.
///
/// Each step first applies theta <- theta * (1 - lr * weight_decay), then the
/// bias-corrected Adam update. Frozen parameters are skipped entirely.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig config = {});

  /// Throws NumericError naming the parameter if any trainable gradient is
  /// non-finite; in that case no parameter is modified.
  void step(double lr);
  void zero_grad();

  std::uint64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

/// eta_min + (eta_max - eta_min) * (1 + cos(pi * t / T)) / 2; returns eta_max
/// when T == 0.
double cosine_lr(double t, double total, double eta_max, double eta_min);

}  // namespace longimam::numerics
