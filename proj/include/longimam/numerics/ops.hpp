// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "longimam/numerics/kernels.hpp"
#include "longimam/numerics/tape.hpp"

namespace longimam::numerics {

using kernels::BatchNormState;

enum class BatchNormMode { train, eval };

// Differentiable ops. All batched ops take the batch as the leading axis.

/// Same-padded convolution: x [N,Ci,H,W], kernel [Co,Ci,k,k], bias [Co].
Var conv2d(Var x, Var kernel, std::optional<Var> bias = std::nullopt);

/// Train mode normalises with batch statistics and updates `state` (EMA);
/// eval mode uses the running statistics only.
Var batchnorm2d(Var x, Var gamma, Var beta, BatchNormState& state, BatchNormMode mode);

/// Subgradient 0 at exactly 0.
Var relu(Var x);
Var maxpool2x2(Var x);
/// [N,C,H,W] -> [N,C]
Var global_maxpool(Var x);
/// x [N,n] * weight[m,n]^T + bias -> [N,m]
Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// 1 - x
Var one_minus(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var scale(Var x, double factor);
Var sum(Var x);
Var reshape(Var x, Shape shape);

/// Rows of a [N,F] matrix (repeats allowed) -> [rows.size(),F].
Var gather_rows(Var x, std::vector<std::size_t> rows);
/// [N,F1] ++ [N,F2] -> [N,F1+F2]
Var concat_cols(Var a, Var b);

/// Mean over the M samples of w_m * BCE(sigmoid(logit_m), y_m), evaluated in
/// the log-sum-exp form. logits may be [M] or [M,1].
Var weighted_bce(Var logits, std::span<const double> labels, std::span<const double> weights);

/// Value-only counterpart of weighted_bce.
double weighted_bce_value(std::span<const double> logits, std::span<const double> labels,
                          std::span<const double> weights);

/// Logistic sigmoid that saturates gracefully.
double sigmoid(double x);

}  // namespace longimam::numerics
