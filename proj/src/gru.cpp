// SPDX-License-Identifier: Apache-2.0
#include "longimam/numerics/gru.hpp"

#include <cmath>

namespace longimam::numerics {

namespace {
Parameter uniform_param(const std::string& name, Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return Parameter(name, std::move(t));
}
}  // namespace

GruParams::GruParams(const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_z = uniform_param(prefix + ".w_z", {hidden, input}, bound, rng);
  w_r = uniform_param(prefix + ".w_r", {hidden, input}, bound, rng);
  w_h = uniform_param(prefix + ".w_h", {hidden, input}, bound, rng);
  u_z = uniform_param(prefix + ".u_z", {hidden, hidden}, bound, rng);
  u_r = uniform_param(prefix + ".u_r", {hidden, hidden}, bound, rng);
  u_h = uniform_param(prefix + ".u_h", {hidden, hidden}, bound, rng);
  b_z = Parameter(prefix + ".b_z", Tensor({hidden}));
  b_r = Parameter(prefix + ".b_r", Tensor({hidden}));
  b_h = Parameter(prefix + ".b_h", Tensor({hidden}));
}

std::vector<Parameter*> GruParams::parameters() {
  return {&w_z, &w_r, &w_h, &u_z, &u_r, &u_h, &b_z, &b_r, &b_h};
}

GruVars bind(Tape& tape, GruParams& p) {
  return GruVars{tape.parameter(p.w_z), tape.parameter(p.w_r), tape.parameter(p.w_h),
                 tape.parameter(p.u_z), tape.parameter(p.u_r), tape.parameter(p.u_h),
                 tape.parameter(p.b_z), tape.parameter(p.b_r), tape.parameter(p.b_h)};
}

Var gru_cell(Var x, Var h_prev, const GruVars& g) {
  Var z = sigmoid(add(linear(x, g.w_z, g.b_z), linear(h_prev, g.u_z)));
  Var r = sigmoid(add(linear(x, g.w_r, g.b_r), linear(h_prev, g.u_r)));
  Var n = tanh(add(linear(x, g.w_h, g.b_h), linear(mul(r, h_prev), g.u_h)));
  return add(mul(one_minus(z), h_prev), mul(z, n));
}

}  // namespace longimam::numerics
