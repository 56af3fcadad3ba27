#include "fsv/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fsv/errors.hpp"

namespace fsv {

double gradient_relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double evaluate_scalar(const ScalarFunction& f,
                       const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.leaf(p, false));
  const Var out = f(tape, vars);
  const double value = out.value().item();
  if (!std::isfinite(value)) {
    throw NumericError("function is not finite at a probe point");
  }
  return value;
}

std::vector<Tensor> analytic_gradients(const ScalarFunction& f,
                                       const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.leaf(p, true));
  const Var out = f(tape, vars);
  tape.backward(out);
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (const Var& v : vars) grads.push_back(tape.grad(v));
  return grads;
}

GradCheckReport grad_check(const ScalarFunction& f, std::vector<Tensor>& params,
                           double h) {
  if (!(h > 0.0)) throw ContractError("finite-difference step must be positive");
  const std::vector<Tensor> analytic = analytic_gradients(f, params);

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double original = param[i];
      double plus = 0.0;
      double minus = 0.0;
      try {
        param[i] = original + h;
        plus = evaluate_scalar(f, params);
        param[i] = original - h;
        minus = evaluate_scalar(f, params);
      } catch (...) {
        param[i] = original;
        throw;
      }
      param[i] = original;

      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[p][i];
      const double err = gradient_relative_error(a, numeric);
      ++report.coordinates;
      if (err > report.max_relative_error || report.coordinates == 1) {
        report.max_relative_error = err;
        report.worst_param = p;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace fsv
