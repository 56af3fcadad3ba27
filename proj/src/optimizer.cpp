#include "fsv/optimizer.hpp"

#include <cmath>

#include "fsv/errors.hpp"

namespace fsv {

void optimizer_step(std::span<const ParamRef> params, OptimizerState& state,
                    const OptimizerConfig& config) {
  if (!(config.learning_rate > 0.0)) {
    throw ConfigurationError("learning rate must be positive");
  }
  for (const ParamRef& p : params) {
    if (!p.tensor->has_grad()) {
      throw ContractError("parameter " + p.name + " has no gradient");
    }
    for (double g : p.tensor->grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient for parameter " + p.name);
      }
    }
  }

  const bool adam = config.kind == OptimizerKind::adam;
  if (adam && state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const ParamRef& p : params) {
      state.first_moment.emplace_back(p.tensor->size(), 0.0);
      state.second_moment.emplace_back(p.tensor->size(), 0.0);
    }
    state.steps = 0;
  }

  // Stage every update so a non-finite result leaves parameters untouched.
  OptimizerState next = state;
  ++next.steps;
  std::vector<std::vector<double>> updated(params.size());
  const double t = static_cast<double>(next.steps);
  const double correct1 = 1.0 - std::pow(config.beta1, t);
  const double correct2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& w = *params[k].tensor;
    const auto g = w.grad();
    auto& out = updated[k];
    out.assign(w.values().begin(), w.values().end());
    if (!adam) {
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= config.learning_rate * g[i];
      }
    } else {
      auto& m = next.first_moment[k];
      auto& v = next.second_moment[k];
      for (std::size_t i = 0; i < out.size(); ++i) {
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
        const double m_hat = m[i] / correct1;
        const double v_hat = v[i] / correct2;
        out[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
      }
    }
    for (double v : out) {
      if (!std::isfinite(v)) {
        throw NumericError("optimizer step made parameter " + params[k].name +
                           " non-finite");
      }
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].tensor->data();
    std::copy(updated[k].begin(), updated[k].end(), data.begin());
  }
  state = std::move(next);
}

}  // namespace fsv
