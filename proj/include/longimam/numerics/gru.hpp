// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "longimam/numerics/ops.hpp"
#include "longimam/numerics/rng.hpp"

namespace longimam::numerics {

/// Parameters of a Cho-style GRU cell:
///
///   z  = sigmoid(W_z x + U_z h + b_z)
///   r  = sigmoid(W_r x + U_r h + b_r)
///   n  = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h + z * n
struct GruParams {
  Parameter w_z, w_r, w_h;  // [hidden, input]
  Parameter u_z, u_r, u_h;  // [hidden, hidden]
  Parameter b_z, b_r, b_h;  // [hidden]

  GruParams() = default;
  /// Weights uniform in +-1/sqrt(hidden), biases zero.
  GruParams(const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng);

  std::size_t input_size() const { return w_z.value.dim(1); }
  std::size_t hidden_size() const { return w_z.value.dim(0); }
  std::vector<Parameter*> parameters();
};

/// GruParams bound to one tape.
struct GruVars {
  Var w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h;
};

GruVars bind(Tape& tape, GruParams& params);

/// One step for a batch: x [B,input], h_prev [B,hidden] -> [B,hidden].
Var gru_cell(Var x, Var h_prev, const GruVars& gru);

}  // namespace longimam::numerics
