// SPDX-License-Identifier: Apache-2.0
// Reference implementations and helpers shared by unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "longimam/numerics/rng.hpp"
#include "longimam/numerics/tape.hpp"
#include "longimam/numerics/tensor.hpp"

namespace longimam::testing {

using numerics::Parameter;
using numerics::Rng;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Direct six-loop same-padded convolution.
inline Tensor naive_conv2d(const Tensor& x, const Tensor& k, const Tensor* bias) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t co = k.dim(0), ks = k.dim(2);
  const long pad = static_cast<long>(ks / 2);
  Tensor out({n, co, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < ks; ++ky)
              for (std::size_t kx = 0; kx < ks; ++kx) {
                const long sy = static_cast<long>(y + ky) - pad;
                const long sx = static_cast<long>(xx + kx) - pad;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                acc += x[((b * ci + c) * h + sy) * w + sx] * k[((o * ci + c) * ks + ky) * ks + kx];
              }
          out[((b * co + o) * h + y) * w + xx] = acc;
        }
  return out;
}

/// Sampled central-difference comparison of Parameter::grad against a scalar
/// loss built by `build` on a fresh tape.
struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t refined = 0;  // coordinates where a kink forced a smaller step
  double max_rel_error = 0.0;
  std::string worst;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

template <typename Build>
double eval_loss(Build& build) {
  Tape tape;
  Var loss = build(tape);
  return loss.value()[0];
}

/// `group` lists the parameters sharing the sample budget; coordinates are
/// drawn uniformly over their concatenation without replacement.
template <typename Build>
GradCheckResult grad_check(Build build, const std::vector<Parameter*>& all, const std::vector<Parameter*>& group,
                           std::size_t samples, double step, Rng& rng, bool kink_aware = false) {
  for (Parameter* p : all) p->zero_grad();
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
  }
  std::vector<std::pair<Parameter*, std::size_t>> coords;
  for (Parameter* p : group)
    for (std::size_t i = 0; i < p->value.size(); ++i) coords.emplace_back(p, i);
  std::span<std::pair<Parameter*, std::size_t>> view(coords);
  rng.shuffle(view);
  if (coords.size() > samples) coords.resize(samples);

  GradCheckResult result;
  for (auto& [p, i] : coords) {
    const double orig = p->value[i];
    auto central = [&](double h) {
      p->value[i] = orig + h;
      const double up = eval_loss(build);
      p->value[i] = orig - h;
      const double down = eval_loss(build);
      p->value[i] = orig;
      return (up - down) / (2.0 * h);
    };
    double numeric = central(step);
    if (kink_aware) {
      // A ReLU or max-pool switch inside [x-h, x+h] shows up as disagreement
      // between the h and h/2 estimates; shrink until they agree.
      double h = step;
      for (int level = 0; level < 3; ++level) {
        const double half = central(h / 2.0);
        const bool agree = relative_error(numeric, half) < 1e-4;
        numeric = half;
        if (agree) break;
        if (level == 0) ++result.refined;
        h /= 4.0;
        numeric = central(h);
      }
    }
    const double err = relative_error(p->grad[i], numeric);
    ++result.checked;
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = p->name + "[" + std::to_string(i) + "] analytic " + std::to_string(p->grad[i]) + " numeric " +
                     std::to_string(numeric);
    }
  }
  return result;
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("longimam_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace longimam::testing
