// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "longimam/numerics/tensor.hpp"

namespace longimam::numerics {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode recording of one forward pass.
///
/// Nodes are appended in evaluation order, so a reverse sweep over node ids is
/// a valid topological order. Gradients reaching a Parameter leaf are added
/// (never assigned) into Parameter::grad.
class Tape {
 public:
  /// Receives the gradient with respect to this node's output and must push
  /// gradients to its parents through Tape::accumulate / Tape::grad_slot.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. Frozen parameters are recorded as constants.
  Var parameter(Parameter& param);

  /// Records an op output. requires_grad is inherited from the parents.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds g into the gradient of v (no-op when v does not require grad).
  void accumulate(Var v, const Tensor& g);
  /// Zero-initialised gradient buffer of v for in-place accumulation, or
  /// nullptr when v does not require grad.
  Tensor* grad_slot(Var v);

  /// Reverse sweep from a scalar node; throws UsageError otherwise.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

}  // namespace longimam::numerics
