#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsv/tensor.hpp"

namespace fsv {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// A trainable tensor whose gradient slot holds the step's gradient.
struct ParamRef {
  std::string name;
  Tensor* tensor = nullptr;
};

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t steps = 0;
};

// SGD: w <- w - lr * g. Adam: bias-corrected moments. Nothing is written if a
// gradient or an updated value is non-finite; NumericError names the tensor.
void optimizer_step(std::span<const ParamRef> params, OptimizerState& state,
                    const OptimizerConfig& config);

}  // namespace fsv
