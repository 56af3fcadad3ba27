#pragma once

// Differentiable ops recorded on a Tape. Inputs must live on the same tape.

#include <optional>

#include "fsv/autograd.hpp"
#include "fsv/kernels.hpp"
#include "fsv/tensor.hpp"

namespace fsv {

enum class Mode { train, eval };

using kernels::Padding;
using kernels::Triple;

// Running statistics carried by one batch-normalization layer.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.9;  // running <- momentum * running + (1 - momentum) * batch

  static BatchNormState fresh(std::size_t features);
};

namespace ops {

enum class ElementwiseOp { add, sub, mul, relu, scale };

// b must have a's shape or hold a single element (broadcast). relu ignores b;
// scale multiplies a by the single value of b.
Var elementwise(ElementwiseOp op, Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var relu(Var a);
Var scale(Var a, double factor);

Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);

Var matmul(Var a, Var b);
Var transpose(Var a);
// x[N x F] + bias[F] on every row.
Var add_bias(Var x, Var bias);
// x * weight^T + bias with weight laid out [out x in].
Var linear(Var x, Var weight, Var bias);

Var conv3d(Var input, Var kernels, std::optional<Var> bias, Triple stride,
           Padding padding);
Var maxpool3d(Var input, Triple window, Triple stride);

// Normalizes over every leading axis, with the last axis as features. In
// train mode the state's running statistics are updated (unbiased variance)
// and at least two rows are required.
Var batchnorm(Var input, Var gamma, Var beta, BatchNormState& state, Mode mode);

// [D,H,W,C] -> [C] or [N,D,H,W,C] -> [N,C]
Var global_avg_pool(Var input);

// Scales every row (last axis) to unit L2 norm.
Var l2_normalize_rows(Var x);

// Euclidean distance between two equal-shaped tensors.
Var euclidean_distance(Var a, Var b);

}  // namespace ops
}  // namespace fsv
