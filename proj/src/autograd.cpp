#include "fsv/autograd.hpp"

#include <algorithm>
#include <utility>

#include "fsv/errors.hpp"

namespace fsv {

Tape& Var::tape() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(id_); }

bool Var::requires_grad() const { return tape().requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs,
                 BackwardFn backward) {
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) {
      throw ContractError("op '" + node.op + "' mixes Vars from different tapes");
    }
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || requires_grad(in.id());
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) {
    throw ContractError("backward called with a Var from another tape");
  }
  Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(root.value.shape()));
  }
  for (Node& node : nodes_) node.grad.clear();
  last_visits_ = 0;
  root.grad.assign(1, 1.0);

  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.grad.empty() || !node.backward) continue;
    GradContext ctx;
    ctx.output_grad = node.grad;
    ctx.input_grads.reserve(node.inputs.size());
    for (NodeId in : node.inputs) {
      Node& input = nodes_[in];
      if (!input.requires_grad) {
        ctx.input_grads.emplace_back();
        continue;
      }
      if (input.grad.empty()) input.grad.assign(input.value.size(), 0.0);
      ctx.input_grads.emplace_back(input.grad);
    }
    node.backward(ctx);
    ++last_visits_;
  }
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_.at(v.id());
  if (node.grad.empty()) return Tensor(node.value.shape(), 0.0);
  return Tensor(node.value.shape(), node.grad);
}

}  // namespace fsv
