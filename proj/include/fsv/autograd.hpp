#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsv/tensor.hpp"

namespace fsv {

class Tape;
using NodeId = std::size_t;

// What a recorded op's backward function receives. input_grads[i] is empty
// when input i does not need a gradient; otherwise the op must accumulate
// into it.
struct GradContext {
  std::span<const double> output_grad;
  std::vector<std::span<double>> input_grads;
};

using BackwardFn = std::function<void(const GradContext&)>;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

// Append-only record of primitive ops. Node ids are assigned in creation
// order, so every op's inputs precede it and a reverse sweep is a valid
// topological order for backward. A tape belongs to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records an op output. The backward function is dropped when no input
  // requires a gradient.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs,
             BackwardFn backward);

  // Reverse-mode sweep from a single-element loss node.
  void backward(Var loss);

  // Gradient accumulated at v by the last backward; zeros when no path
  // reached it.
  Tensor grad(Var v) const;

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::string_view op_name(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const {
    return nodes_.at(id).inputs;
  }
  std::size_t size() const { return nodes_.size(); }

  // Number of backward functions run by the last backward().
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<double> grad;  // empty until a gradient flows here
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  // deque keeps references stable, so backward closures may hold pointers
  // to input values.
  std::deque<Node> nodes_;
  std::size_t last_visits_ = 0;
};

}  // namespace fsv
