// SPDX-License-Identifier: Apache-2.0
#include "longimam/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "longimam/errors.hpp"

namespace longimam::numerics {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// col: [ci*k*k, h*w]
void im2col(const double* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            double* col) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xc = x + c * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * hw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          double* out = row + y * w;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(out, out + w, 0.0);
            continue;
          }
          const double* src = xc + sy * static_cast<std::ptrdiff_t>(w);
          for (std::size_t x0 = 0; x0 < w; ++x0) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x0) + dx;
            out[x0] = (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) ? src[sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, std::size_t channels, std::size_t h, std::size_t w,
                std::size_t k, double* x) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    double* xc = x + c * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * hw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* in = row + y * w;
          double* dst = xc + sy * static_cast<std::ptrdiff_t>(w);
          for (std::size_t x0 = 0; x0 < w; ++x0) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x0) + dx;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) dst[sx] += in[x0];
          }
        }
      }
    }
  }
}

struct ConvDims {
  std::size_t n, ci, co, h, w, k;
};

ConvDims conv_dims(const Tensor& x, const Tensor& kernel, const Tensor* bias) {
  require_rank(x, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const ConvDims d{x.dim(0), x.dim(1), kernel.dim(0), x.dim(2), x.dim(3), kernel.dim(2)};
  if (kernel.dim(1) != d.ci) {
    throw ShapeError("conv2d: input has " + std::to_string(d.ci) + " channels but kernel " +
                     shape_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)));
  }
  if (kernel.dim(2) != kernel.dim(3) || d.k % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd extent, got " +
                     shape_string(kernel.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != d.co)) {
    throw ShapeError("conv2d: bias " + shape_string(bias->shape()) + " for " +
                     std::to_string(d.co) + " output channels");
  }
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// kernels

namespace kernels {

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor* bias) {
  const ConvDims d = conv_dims(x, kernel, bias);
  const std::size_t hw = d.h * d.w;
  const std::size_t rows = d.ci * d.k * d.k;
  Tensor y({d.n, d.co, d.h, d.w});
  ConstMatMap kmat(kernel.raw(), static_cast<Eigen::Index>(d.co), static_cast<Eigen::Index>(rows));
  std::vector<double> col(d.k == 1 ? 0 : rows * hw);
  for (std::size_t n = 0; n < d.n; ++n) {
    const double* xn = x.raw() + n * d.ci * hw;
    const double* colp = xn;
    if (d.k != 1) {
      im2col(xn, d.ci, d.h, d.w, d.k, col.data());
      colp = col.data();
    }
    MatMap out(y.raw() + n * d.co * hw, static_cast<Eigen::Index>(d.co),
               static_cast<Eigen::Index>(hw));
    out.noalias() = kmat * ConstMatMap(colp, static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(hw));
    if (bias) out.colwise() += ConstVecMap(bias->raw(), static_cast<Eigen::Index>(d.co));
  }
  return y;
}

Tensor batchnorm2d_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const BatchNormState& state) {
  require_rank(x, 4, "batchnorm2d");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.size() != c || beta.size() != c || state.running_mean.size() != c) {
    throw ShapeError("batchnorm2d: parameters do not match " + std::to_string(c) + " channels");
  }
  Tensor y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
    const double a = gamma[ch] * inv;
    const double b = beta[ch] - a * state.running_mean[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const double* src = x.raw() + (i * c + ch) * hw;
      double* dst = y.raw() + (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) dst[j] = a * src[j] + b;
    }
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor maxpool2x2(const Tensor& x, std::vector<std::uint32_t>* argmax) {
  require_rank(x, 4, "maxpool2x2");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw ShapeError("maxpool2x2: spatial extent " + shape_string(x.shape()) + " below 2");
  const std::size_t h2 = h / 2, w2 = w / 2;
  Tensor y({n, c, h2, w2});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < h2; ++oy) {
      for (std::size_t ox = 0; ox < w2; ++ox, ++o) {
        std::size_t best = base + (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[o] = x[best];
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return y;
}

Tensor global_maxpool(const Tensor& x, std::vector<std::uint32_t>* argmax) {
  require_rank(x, 4, "global_maxpool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw ShapeError("global_maxpool: empty spatial extent");
  Tensor y({n, c});
  if (argmax) argmax->assign(n * c, 0);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = x.raw() + plane * hw;
    std::size_t best = 0;
    for (std::size_t j = 1; j < hw; ++j) {
      if (src[j] > src[best]) best = j;
    }
    y[plane] = src[best];
    if (argmax) (*argmax)[plane] = static_cast<std::uint32_t>(plane * hw + best);
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("dense: input width " + std::to_string(in) + " vs weight " +
                     shape_string(weight.shape()));
  }
  if (bias && bias->size() != out) {
    throw ShapeError("dense: bias " + shape_string(bias->shape()) + " for " + std::to_string(out) +
                     " outputs");
  }
  Tensor y({n, out});
  MatMap ym(y.raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
  ym.noalias() = ConstMatMap(x.raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in)) *
                 ConstMatMap(weight.raw(), static_cast<Eigen::Index>(out),
                             static_cast<Eigen::Index>(in))
                     .transpose();
  if (bias) {
    ym.rowwise() += ConstVecMap(bias->raw(), static_cast<Eigen::Index>(out)).transpose();
  }
  return y;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// differentiable ops

Var conv2d(Var x, Var kernel, std::optional<Var> bias) {
  Tape& tape = *x.tape;
  const Tensor* bias_value = bias ? &bias->value() : nullptr;
  Tensor y = kernels::conv2d(x.value(), kernel.value(), bias_value);
  const ConvDims d = conv_dims(x.value(), kernel.value(), bias_value);
  Var b = bias.value_or(kernel);
  const bool has_bias = bias.has_value();
  return tape.record(std::move(y), {x, kernel, b}, [x, kernel, b, has_bias, d](Tape& t, const Tensor& g) {
    const std::size_t hw = d.h * d.w;
    const std::size_t rows = d.ci * d.k * d.k;
    const auto erows = static_cast<Eigen::Index>(rows);
    const auto ehw = static_cast<Eigen::Index>(hw);
    const auto eco = static_cast<Eigen::Index>(d.co);
    Tensor* dk = t.grad_slot(kernel);
    Tensor* dx = t.grad_slot(x);
    Tensor* db = has_bias ? t.grad_slot(b) : nullptr;
    const Tensor& xv = x.value();
    const Tensor& kv = kernel.value();
    std::vector<double> col(rows * hw);
    for (std::size_t n = 0; n < d.n; ++n) {
      ConstMatMap gy(g.raw() + n * d.co * hw, eco, ehw);
      if (dk) {
        const double* xn = xv.raw() + n * d.ci * hw;
        const double* colp = xn;
        if (d.k != 1) {
          im2col(xn, d.ci, d.h, d.w, d.k, col.data());
          colp = col.data();
        }
        MatMap(dk->raw(), eco, erows).noalias() += gy * ConstMatMap(colp, erows, ehw).transpose();
      }
      if (db) {
        for (std::size_t c = 0; c < d.co; ++c) (*db)[c] += gy.row(static_cast<Eigen::Index>(c)).sum();
      }
      if (dx) {
        double* dxn = dx->raw() + n * d.ci * hw;
        if (d.k == 1) {
          MatMap(dxn, erows, ehw).noalias() += ConstMatMap(kv.raw(), eco, erows).transpose() * gy;
        } else {
          MatMap(col.data(), erows, ehw).noalias() = ConstMatMap(kv.raw(), eco, erows).transpose() * gy;
          col2im_add(col.data(), d.ci, d.h, d.w, d.k, dxn);
        }
      }
    }
  });
}

Var batchnorm2d(Var x, Var gamma, Var beta, BatchNormState& state, BatchNormMode mode) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  require_rank(xv, 4, "batchnorm2d");
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (gamma.value().size() != c || beta.value().size() != c || state.running_mean.size() != c) {
    throw ShapeError("batchnorm2d: parameters do not match " + std::to_string(c) + " channels");
  }

  if (mode == BatchNormMode::eval) {
    Tensor y = kernels::batchnorm2d_eval(xv, gamma.value(), beta.value(), state);
    Tensor mean = state.running_mean;
    Tensor var = state.running_var;
    const double eps = state.eps;
    return tape.record(std::move(y), {x, gamma, beta},
                       [x, gamma, beta, mean, var, eps, n, c, hw](Tape& t, const Tensor& g) {
                         Tensor* dx = t.grad_slot(x);
                         Tensor* dg = t.grad_slot(gamma);
                         Tensor* dbeta = t.grad_slot(beta);
                         const Tensor& xv = x.value();
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           const double inv = 1.0 / std::sqrt(var[ch] + eps);
                           const double gm = gamma.value()[ch];
                           double sg = 0.0, sgx = 0.0;
                           for (std::size_t i = 0; i < n; ++i) {
                             const std::size_t off = (i * c + ch) * hw;
                             for (std::size_t j = 0; j < hw; ++j) {
                               const double gv = g[off + j];
                               sg += gv;
                               sgx += gv * (xv[off + j] - mean[ch]) * inv;
                               if (dx) (*dx)[off + j] += gv * gm * inv;
                             }
                           }
                           if (dg) (*dg)[ch] += sgx;
                           if (dbeta) (*dbeta)[ch] += sg;
                         }
                       });
  }

  const std::size_t m = n * hw;
  if (m < 2) {
    throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                     shape_string(xv.shape()));
  }
  Tensor xhat(xv.shape());
  Tensor inv_std({c});
  Tensor y(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* src = xv.raw() + (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) mean += src[j];
    }
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* src = xv.raw() + (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) var += (src[j] - mean) * (src[j] - mean);
    }
    var /= static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + state.eps);
    inv_std[ch] = inv;
    const double gm = gamma.value()[ch], bt = beta.value()[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        const double xh = (xv[off + j] - mean) * inv;
        xhat[off + j] = xh;
        y[off + j] = gm * xh + bt;
      }
    }
    state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mean;
    const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
    state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
  }
  return tape.record(std::move(y), {x, gamma, beta},
                     [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, hw,
                      m](Tape& t, const Tensor& g) {
                       Tensor* dx = t.grad_slot(x);
                       Tensor* dg = t.grad_slot(gamma);
                       Tensor* dbeta = t.grad_slot(beta);
                       const auto md = static_cast<double>(m);
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         double sg = 0.0, sgx = 0.0;
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t off = (i * c + ch) * hw;
                           for (std::size_t j = 0; j < hw; ++j) {
                             sg += g[off + j];
                             sgx += g[off + j] * xhat[off + j];
                           }
                         }
                         if (dg) (*dg)[ch] += sgx;
                         if (dbeta) (*dbeta)[ch] += sg;
                         if (!dx) continue;
                         const double k = gamma.value()[ch] * inv_std[ch] / md;
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t off = (i * c + ch) * hw;
                           for (std::size_t j = 0; j < hw; ++j) {
                             (*dx)[off + j] += k * (md * g[off + j] - sg - xhat[off + j] * sgx);
                           }
                         }
                       }
                     });
}

Var relu(Var x) {
  return x.tape->record(kernels::relu(x.value()), {x}, [x](Tape& t, const Tensor& g) {
    Tensor* dx = t.grad_slot(x);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) (*dx)[i] += g[i];
    }
  });
}

namespace {
Var pool_with_argmax(Var x, Tensor y, std::vector<std::uint32_t> argmax) {
  return x.tape->record(std::move(y), {x}, [x, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
    Tensor* dx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*dx)[argmax[i]] += g[i];
  });
}
}  // namespace

Var maxpool2x2(Var x) {
  std::vector<std::uint32_t> argmax;
  Tensor y = kernels::maxpool2x2(x.value(), &argmax);
  return pool_with_argmax(x, std::move(y), std::move(argmax));
}

Var global_maxpool(Var x) {
  std::vector<std::uint32_t> argmax;
  Tensor y = kernels::global_maxpool(x.value(), &argmax);
  return pool_with_argmax(x, std::move(y), std::move(argmax));
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  const Tensor* bias_value = bias ? &bias->value() : nullptr;
  Tensor y = kernels::linear(x.value(), weight.value(), bias_value);
  Var b = bias.value_or(weight);
  const bool has_bias = bias.has_value();
  return x.tape->record(std::move(y), {x, weight, b}, [x, weight, b, has_bias](Tape& t, const Tensor& g) {
    const auto n = static_cast<Eigen::Index>(x.value().dim(0));
    const auto in = static_cast<Eigen::Index>(x.value().dim(1));
    const auto out = static_cast<Eigen::Index>(weight.value().dim(0));
    ConstMatMap gy(g.raw(), n, out);
    if (Tensor* dx = t.grad_slot(x)) {
      MatMap(dx->raw(), n, in).noalias() += gy * ConstMatMap(weight.value().raw(), out, in);
    }
    if (Tensor* dw = t.grad_slot(weight)) {
      MatMap(dw->raw(), out, in).noalias() += gy.transpose() * ConstMatMap(x.value().raw(), n, in);
    }
    if (has_bias) {
      if (Tensor* db = t.grad_slot(b)) {
        Eigen::Map<Eigen::VectorXd>(db->raw(), out) += gy.colwise().sum().transpose();
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor y = a.value();
  y.add_(b.value());
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (Tensor* db = t.grad_slot(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (Tensor* da = t.grad_slot(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * b.value()[i];
    }
    if (Tensor* db = t.grad_slot(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * a.value()[i];
    }
  });
}

Var one_minus(Var x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 - x.value()[i];
  return x.tape->record(std::move(y), {x}, [x](Tape& t, const Tensor& g) {
    if (Tensor* dx = t.grad_slot(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] -= g[i];
    }
  });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var sigmoid(Var x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid(x.value()[i]);
  Tensor saved = y;
  return x.tape->record(std::move(y), {x}, [x, saved = std::move(saved)](Tape& t, const Tensor& g) {
    Tensor* dx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * saved[i] * (1.0 - saved[i]);
  });
}

Var tanh(Var x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(x.value()[i]);
  Tensor saved = y;
  return x.tape->record(std::move(y), {x}, [x, saved = std::move(saved)](Tape& t, const Tensor& g) {
    Tensor* dx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * (1.0 - saved[i] * saved[i]);
  });
}

Var scale(Var x, double factor) {
  Tensor y = x.value();
  for (double& v : y.data()) v *= factor;
  return x.tape->record(std::move(y), {x}, [x, factor](Tape& t, const Tensor& g) {
    if (Tensor* dx = t.grad_slot(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += factor * g[i];
    }
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape->record(Tensor::scalar(total), {x}, [x](Tape& t, const Tensor& g) {
    if (Tensor* dx = t.grad_slot(x)) {
      for (double& v : dx->data()) v += g[0];
    }
  });
}

Var reshape(Var x, Shape shape) {
  return x.tape->record(x.value().reshaped(std::move(shape)), {x},
                        [x](Tape& t, const Tensor& g) { t.accumulate(x, g); });
}

Var gather_rows(Var x, std::vector<std::size_t> rows) {
  require_rank(x.value(), 2, "gather_rows");
  const std::size_t n = x.value().dim(0), f = x.value().dim(1);
  Tensor y({rows.size(), f});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw ShapeError("gather_rows: row " + std::to_string(rows[r]) + " out of range");
    std::copy_n(x.value().raw() + rows[r] * f, f, y.raw() + r * f);
  }
  return x.tape->record(std::move(y), {x}, [x, rows = std::move(rows), f](Tape& t, const Tensor& g) {
    Tensor* dx = t.grad_slot(x);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < f; ++j) (*dx)[rows[r] * f + j] += g[r * f + j];
    }
  });
}

Var concat_cols(Var a, Var b) {
  require_rank(a.value(), 2, "concat_cols");
  require_rank(b.value(), 2, "concat_cols");
  const std::size_t n = a.value().dim(0), fa = a.value().dim(1), fb = b.value().dim(1);
  if (b.value().dim(0) != n) throw ShapeError("concat_cols: row counts differ");
  Tensor y({n, fa + fb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.value().raw() + i * fa, fa, y.raw() + i * (fa + fb));
    std::copy_n(b.value().raw() + i * fb, fb, y.raw() + i * (fa + fb) + fa);
  }
  return a.tape->record(std::move(y), {a, b}, [a, b, n, fa, fb](Tape& t, const Tensor& g) {
    if (Tensor* da = t.grad_slot(a)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < fa; ++j) (*da)[i * fa + j] += g[i * (fa + fb) + j];
    }
    if (Tensor* db = t.grad_slot(b)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < fb; ++j) (*db)[i * fb + j] += g[i * (fa + fb) + fa + j];
    }
  });
}

namespace {
void check_bce_args(std::size_t m, std::span<const double> labels, std::span<const double> weights) {
  if (labels.size() != m || weights.size() != m) {
    throw ShapeError("weighted_bce: " + std::to_string(m) + " logits, " +
                     std::to_string(labels.size()) + " labels, " + std::to_string(weights.size()) +
                     " weights");
  }
  if (m == 0) throw UsageError("weighted_bce: empty batch");
  for (double w : weights) {
    if (!(w > 0.0)) throw UsageError("weighted_bce: weights must be strictly positive");
  }
}

// -[y log s(x) + (1-y) log(1-s(x))] = max(x,0) - x*y + log1p(exp(-|x|))
double bce_term(double x, double y) {
  return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}
}  // namespace

double weighted_bce_value(std::span<const double> logits, std::span<const double> labels,
                          std::span<const double> weights) {
  check_bce_args(logits.size(), labels, weights);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += weights[i] * bce_term(logits[i], labels[i]);
  return total / static_cast<double>(logits.size());
}

Var weighted_bce(Var logits, std::span<const double> labels, std::span<const double> weights) {
  const Tensor& xv = logits.value();
  const std::size_t m = xv.size();
  const double loss = weighted_bce_value(xv.data(), labels, weights);
  std::vector<double> y(labels.begin(), labels.end());
  std::vector<double> w(weights.begin(), weights.end());
  return logits.tape->record(Tensor::scalar(loss), {logits},
                             [logits, y = std::move(y), w = std::move(w), m](Tape& t, const Tensor& g) {
                               Tensor* dx = t.grad_slot(logits);
                               const Tensor& xv = logits.value();
                               const double k = g[0] / static_cast<double>(m);
                               for (std::size_t i = 0; i < m; ++i) {
                                 (*dx)[i] += k * w[i] * (sigmoid(xv[i]) - y[i]);
                               }
                             });
}

}  // namespace longimam::numerics
