// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "longimam/numerics/tensor.hpp"

// Gradient-free forward kernels. The differentiable ops in ops.hpp are built
// on these; inference paths (frozen backbone, evaluation) call them directly.
namespace longimam::numerics::kernels {

/// Running statistics of one batch-normalization layer.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}
};

/// Same-padded 2-D convolution. x: [N,Ci,H,W], kernel: [Co,Ci,k,k] with odd
/// k, bias: [Co] or empty. Returns [N,Co,H,W].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor* bias);

/// Eval-mode batch normalization using running statistics. x: [N,C,H,W].
Tensor batchnorm2d_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const BatchNormState& state);

Tensor relu(const Tensor& x);

/// 2x2 stride-2 max pooling with floor semantics. x: [N,C,H,W].
/// When `argmax` is non-null it receives, per output cell, the flat input index
/// of the selected element (first maximum in row-major scan order).
Tensor maxpool2x2(const Tensor& x, std::vector<std::uint32_t>* argmax = nullptr);

/// Per-channel global max. x: [N,C,H,W] -> [N,C].
Tensor global_maxpool(const Tensor& x, std::vector<std::uint32_t>* argmax = nullptr);

/// x: [N,n], weight: [m,n], bias: [m] or empty -> [N,m].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias);

}  // namespace longimam::numerics::kernels
