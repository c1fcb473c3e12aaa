// SPDX-License-Identifier: Apache-2.0
#include "longimam/numerics/optim.hpp"

#include <cmath>
#include <numbers>

#include "longimam/errors.hpp"

namespace longimam::numerics {

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor(p->value.shape());
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void AdamW::step(double lr) {
  for (Parameter* p : params_) {
    if (p->trainable && !p->grad.all_finite()) {
      throw NumericError("adamw: non-finite gradient in parameter '" + p->name + "'");
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (!p.trainable) continue;
    auto theta = p.value.data();
    auto g = p.grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      theta[j] *= decay;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

double cosine_lr(double t, double total, double eta_max, double eta_min) {
  if (total <= 0.0) return eta_max;
  if (t <= 0.0) return eta_max;
  if (t >= total) return eta_min;
  return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(std::numbers::pi * t / total));
}

}  // namespace longimam::numerics
