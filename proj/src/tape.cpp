// SPDX-License-Identifier: Apache-2.0
#include "longimam/numerics/tape.hpp"

#include "longimam/errors.hpp"

namespace longimam::numerics {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param) {
  if (!param.trainable) return constant(param.value);
  Parameter* target = &param;
  nodes_.push_back(Node{param.value, {}, true, [target](Tape&, const Tensor& g) {
                          if (target->grad.shape() != target->value.shape()) {
                            target->grad = Tensor(target->value.shape());
                          }
                          target->grad.add_(g);
                        }});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  bool needs = false;
  for (Var p : parents) {
    if (p.tape != this) throw UsageError("tape: parent recorded on a different tape");
    needs = needs || nodes_[p.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

Tensor* Tape::grad_slot(Var v) {
  Node& node = nodes_[v.id];
  if (!node.requires_grad) return nullptr;
  if (node.grad.shape() != node.value.shape()) node.grad = Tensor(node.value.shape());
  return &node.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& node = nodes_[v.id];
  if (!node.requires_grad) return;
  if (g.size() != node.value.size()) {
    throw ShapeError("tape: gradient " + shape_string(g.shape()) + " for value " +
                     shape_string(node.value.shape()));
  }
  if (node.grad.shape() != node.value.shape()) {
    node.grad = g.reshaped(node.value.shape());
  } else {
    auto dst = node.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw UsageError("backward: variable belongs to another tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " +
                     shape_string(nodes_[loss.id].value.shape()));
  }
  if (!nodes_[loss.id].requires_grad) return;
  for (Node& node : nodes_) node.grad = Tensor();
  accumulate(loss, Tensor(nodes_[loss.id].value.shape(), 1.0));
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
  }
}

}  // namespace longimam::numerics
