#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fsv/autograd.hpp"
#include "fsv/tensor.hpp"

namespace fsv {

// Builds a scalar loss on the given tape from leaf Vars bound to params.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// |a - b| / max(|a|, |b|, 1e-8)
double gradient_relative_error(double analytic, double numeric);

// Compares reverse-mode gradients of f with central differences of step h
// over every coordinate of every parameter. Parameters are restored before
// returning. Throws NumericError if f is non-finite at a probe point.
GradCheckReport grad_check(const ScalarFunction& f, std::vector<Tensor>& params,
                           double h = 1e-5);

// Reverse-mode gradients of f at params, one tensor per parameter.
std::vector<Tensor> analytic_gradients(const ScalarFunction& f,
                                       const std::vector<Tensor>& params);

// Evaluates f without recording backward closures.
double evaluate_scalar(const ScalarFunction& f,
                       const std::vector<Tensor>& params);

}  // namespace fsv
