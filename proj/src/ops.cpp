#include "fsv/ops.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fsv/errors.hpp"

namespace fsv {

BatchNormState BatchNormState::fresh(std::size_t features) {
  BatchNormState state;
  state.running_mean = Tensor({features}, 0.0);
  state.running_var = Tensor({features}, 1.0);
  return state;
}

namespace ops {

namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Var elementwise(ElementwiseOp op, Var a, Var b) {
  switch (op) {
    case ElementwiseOp::add:
      return add(a, b);
    case ElementwiseOp::sub:
      return sub(a, b);
    case ElementwiseOp::mul:
      return mul(a, b);
    case ElementwiseOp::relu:
      return relu(a);
    case ElementwiseOp::scale:
      if (b.value().size() != 1) {
        throw DimensionError("scale needs a single-element factor");
      }
      return mul(a, b);
  }
  throw ContractError("unknown elementwise op");
}

namespace {

enum class Binary { add, sub, mul };

Var binary(Binary kind, const char* name, Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool broadcast = bv.size() == 1 && av.size() != 1;
  if (!broadcast) require_same_shape(name, a, b);

  Tensor out(av.shape());
  const std::size_t n = av.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double y = bv[broadcast ? 0 : i];
    switch (kind) {
      case Binary::add: out[i] = av[i] + y; break;
      case Binary::sub: out[i] = av[i] - y; break;
      case Binary::mul: out[i] = av[i] * y; break;
    }
  }
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  return a.tape().record(
      name, std::move(out), {a, b},
      [kind, broadcast, ap, bp, n](const GradContext& ctx) {
        const auto& g = ctx.output_grad;
        auto& ga = ctx.input_grads[0];
        auto& gb = ctx.input_grads[1];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = broadcast ? 0 : i;
          switch (kind) {
            case Binary::add:
              if (!ga.empty()) ga[i] += g[i];
              if (!gb.empty()) gb[j] += g[i];
              break;
            case Binary::sub:
              if (!ga.empty()) ga[i] += g[i];
              if (!gb.empty()) gb[j] -= g[i];
              break;
            case Binary::mul:
              if (!ga.empty()) ga[i] += g[i] * (*bp)[j];
              if (!gb.empty()) gb[j] += g[i] * (*ap)[i];
              break;
          }
        }
      });
}

}  // namespace

Var add(Var a, Var b) { return binary(Binary::add, "add", a, b); }
Var sub(Var a, Var b) { return binary(Binary::sub, "sub", a, b); }
Var mul(Var a, Var b) { return binary(Binary::mul, "mul", a, b); }

Var relu(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  const Tensor* ap = &av;
  return a.tape().record("relu", std::move(out), {a},
                         [ap](const GradContext& ctx) {
                           auto& ga = ctx.input_grads[0];
                           const auto& x = ap->data();
                           for (std::size_t i = 0; i < ga.size(); ++i) {
                             if (x[i] > 0.0) ga[i] += ctx.output_grad[i];
                           }
                         });
}

Var scale(Var a, double factor) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return a.tape().record("scale", std::move(out), {a},
                         [factor](const GradContext& ctx) {
                           auto& ga = ctx.input_grads[0];
                           for (std::size_t i = 0; i < ga.size(); ++i) {
                             ga[i] += ctx.output_grad[i] * factor;
                           }
                         });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a},
                         [](const GradContext& ctx) {
                           const double g = ctx.output_grad[0];
                           for (double& v : ctx.input_grads[0]) v += g;
                         });
}

Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a},
                         [](const GradContext& ctx) {
                           auto& ga = ctx.input_grads[0];
                           for (std::size_t i = 0; i < ga.size(); ++i) {
                             ga[i] += ctx.output_grad[i];
                           }
                         });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2) {
    throw DimensionError("matmul needs rank-2 operands, got " +
                         shape_string(av.shape()) + " and " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw DimensionError("matmul inner dimensions differ: " +
                         shape_string(av.shape()) + " * " +
                         shape_string(bv.shape()));
  }
  Tensor out({m, n});
  kernels::matmul_forward(m, k, n, av.data(), bv.data(), out.data());
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  return a.tape().record("matmul", std::move(out), {a, b},
                         [=](const GradContext& ctx) {
                           kernels::matmul_backward(
                               m, k, n, ap->data(), bp->data(),
                               ctx.output_grad, ctx.input_grads[0],
                               ctx.input_grads[1]);
                         });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) {
    throw DimensionError("transpose needs a rank-2 tensor, got " +
                         shape_string(av.shape()));
  }
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  return a.tape().record("transpose", std::move(out), {a},
                         [r, c](const GradContext& ctx) {
                           auto& ga = ctx.input_grads[0];
                           for (std::size_t i = 0; i < r; ++i) {
                             for (std::size_t j = 0; j < c; ++j) {
                               ga[i * c + j] += ctx.output_grad[j * r + i];
                             }
                           }
                         });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw DimensionError("add_bias: cannot add " + shape_string(bv.shape()) +
                         " to rows of " + shape_string(xv.shape()));
  }
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      out[i * cols + j] = xv[i * cols + j] + bv[j];
    }
  }
  return x.tape().record("add_bias", std::move(out), {x, bias},
                         [rows, cols](const GradContext& ctx) {
                           auto& gx = ctx.input_grads[0];
                           auto& gb = ctx.input_grads[1];
                           const auto& g = ctx.output_grad;
                           for (std::size_t i = 0; i < rows; ++i) {
                             for (std::size_t j = 0; j < cols; ++j) {
                               if (!gx.empty()) gx[i * cols + j] += g[i * cols + j];
                               if (!gb.empty()) gb[j] += g[i * cols + j];
                             }
                           }
                         });
}

Var linear(Var x, Var weight, Var bias) {
  return add_bias(matmul(x, transpose(weight)), bias);
}

Var conv3d(Var input, Var kernel_var, std::optional<Var> bias, Triple stride,
           Padding padding) {
  const Tensor& xv = input.value();
  const Tensor& kv = kernel_var.value();
  const kernels::ConvGeometry g =
      kernels::conv3d_geometry(xv.shape(), kv.shape(), stride, padding);
  if (bias && (bias->value().rank() != 1 ||
               bias->value().dim(0) != g.out_channels)) {
    throw DimensionError("conv3d bias must be [" +
                         std::to_string(g.out_channels) + "], got " +
                         shape_string(bias->value().shape()));
  }
  Shape out_shape;
  if (xv.rank() == 5) out_shape.push_back(g.batch);
  out_shape.insert(out_shape.end(),
                   {g.out[0], g.out[1], g.out[2], g.out_channels});
  Tensor out(out_shape);
  kernels::conv3d_forward(g, xv.data(), kv.data(),
                          bias ? bias->value().data() : std::span<const double>{},
                          out.data());

  std::vector<Var> inputs{input, kernel_var};
  if (bias) inputs.push_back(*bias);
  const Tensor* xp = &xv;
  const Tensor* kp = &kv;
  const bool has_bias = bias.has_value();
  return input.tape().record(
      "conv3d", std::move(out), std::move(inputs),
      [g, xp, kp, has_bias](const GradContext& ctx) {
        kernels::conv3d_backward(
            g, xp->data(), kp->data(), ctx.output_grad, ctx.input_grads[0],
            ctx.input_grads[1],
            has_bias ? ctx.input_grads[2] : std::span<double>{});
      });
}

Var maxpool3d(Var input, Triple window, Triple stride) {
  const Tensor& xv = input.value();
  const kernels::PoolGeometry g =
      kernels::maxpool3d_geometry(xv.shape(), window, stride);
  Shape out_shape;
  if (xv.rank() == 5) out_shape.push_back(g.batch);
  out_shape.insert(out_shape.end(), {g.out[0], g.out[1], g.out[2], g.channels});
  Tensor out(out_shape);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  kernels::maxpool3d_forward(g, xv.data(), out.data(), *argmax);
  return input.tape().record("maxpool3d", std::move(out), {input},
                             [argmax](const GradContext& ctx) {
                               kernels::maxpool3d_backward(
                                   *argmax, ctx.output_grad,
                                   ctx.input_grads[0]);
                             });
}

Var batchnorm(Var input, Var gamma, Var beta, BatchNormState& state,
              Mode mode) {
  const Tensor& xv = input.value();
  if (xv.rank() < 2) {
    throw DimensionError("batchnorm needs at least [N x F], got " +
                         shape_string(xv.shape()));
  }
  const std::size_t features = xv.shape().back();
  const std::size_t rows = xv.size() / features;
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  if (gv.size() != features || bv.size() != features ||
      state.running_mean.size() != features ||
      state.running_var.size() != features) {
    throw DimensionError("batchnorm parameters do not match " +
                         std::to_string(features) + " features");
  }
  Tensor out(xv.shape());
  const Tensor* xp = &xv;
  const Tensor* gp = &gv;
  const double eps = state.eps;

  if (mode == Mode::train) {
    if (rows < 2) {
      throw DegenerateBatchError(
          "batchnorm in train mode needs at least 2 rows, got " +
          std::to_string(rows));
    }
    auto stats = std::make_shared<std::vector<double>>(2 * features);
    std::span<double> batch_mean(stats->data(), features);
    std::span<double> batch_var(stats->data() + features, features);
    kernels::batchnorm_train_forward(rows, features, xv.data(), gv.data(),
                                     bv.data(), eps, out.data(), batch_mean,
                                     batch_var);
    const double m = state.momentum;
    const double unbias =
        static_cast<double>(rows) / static_cast<double>(rows - 1);
    for (std::size_t f = 0; f < features; ++f) {
      state.running_mean[f] = m * state.running_mean[f] + (1.0 - m) * batch_mean[f];
      state.running_var[f] =
          m * state.running_var[f] + (1.0 - m) * batch_var[f] * unbias;
    }
    return input.tape().record(
        "batchnorm", std::move(out), {input, gamma, beta},
        [=](const GradContext& ctx) {
          std::span<const double> mean_s(stats->data(), features);
          std::span<const double> var_s(stats->data() + features, features);
          kernels::batchnorm_train_backward(
              rows, features, xp->data(), gp->data(), mean_s, var_s, eps,
              ctx.output_grad, ctx.input_grads[0], ctx.input_grads[1],
              ctx.input_grads[2]);
        });
  }

  auto running = std::make_shared<std::vector<double>>(state.running_mean.values());
  running->insert(running->end(), state.running_var.values().begin(),
                  state.running_var.values().end());
  std::span<const double> rmean(running->data(), features);
  std::span<const double> rvar(running->data() + features, features);
  kernels::batchnorm_eval_forward(rows, features, xv.data(), gv.data(),
                                  bv.data(), rmean, rvar, eps, out.data());
  return input.tape().record(
      "batchnorm", std::move(out), {input, gamma, beta},
      [=](const GradContext& ctx) {
        std::span<const double> mean_s(running->data(), features);
        std::span<const double> var_s(running->data() + features, features);
        kernels::batchnorm_eval_backward(
            rows, features, xp->data(), gp->data(), mean_s, var_s, eps,
            ctx.output_grad, ctx.input_grads[0], ctx.input_grads[1],
            ctx.input_grads[2]);
      });
}

Var global_avg_pool(Var input) {
  const Tensor& xv = input.value();
  if (xv.rank() != 4 && xv.rank() != 5) {
    throw DimensionError(
        "global_avg_pool input must be [D,H,W,C] or [N,D,H,W,C], got " +
        shape_string(xv.shape()));
  }
  const std::size_t batch = xv.rank() == 5 ? xv.dim(0) : 1;
  const std::size_t channels = xv.shape().back();
  const std::size_t positions = xv.size() / (batch * channels);
  Tensor out(xv.rank() == 5 ? Shape{batch, channels} : Shape{channels});
  kernels::global_avg_pool_forward(batch, positions, channels, xv.data(),
                                   out.data());
  return input.tape().record("global_avg_pool", std::move(out), {input},
                             [=](const GradContext& ctx) {
                               kernels::global_avg_pool_backward(
                                   batch, positions, channels,
                                   ctx.output_grad, ctx.input_grads[0]);
                             });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t cols = xv.shape().back();
  const std::size_t rows = xv.size() / cols;
  Tensor out(xv.shape());
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += xv[r * cols + c] * xv[r * cols + c];
    const double norm = std::sqrt(s);
    if (!(norm > 0.0)) {
      throw NumericError("cannot normalize a zero-norm row");
    }
    (*norms)[r] = norm;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] / norm;
  }
  const Tensor* xp = &xv;
  return x.tape().record(
      "l2_normalize", std::move(out), {x},
      [=](const GradContext& ctx) {
        auto& gx = ctx.input_grads[0];
        const auto& g = ctx.output_grad;
        for (std::size_t r = 0; r < rows; ++r) {
          const double norm = (*norms)[r];
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            dot += g[r * cols + c] * (*xp)[r * cols + c] / norm;
          }
          for (std::size_t c = 0; c < cols; ++c) {
            const double y = (*xp)[r * cols + c] / norm;
            gx[r * cols + c] += (g[r * cols + c] - y * dot) / norm;
          }
        }
      });
}

Var euclidean_distance(Var a, Var b) {
  require_same_shape("euclidean_distance", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  const double dist = std::sqrt(s);
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  return a.tape().record(
      "euclidean_distance", Tensor::scalar(dist), {a, b},
      [=](const GradContext& ctx) {
        // Subgradient 0 at coincident points.
        if (dist == 0.0) return;
        const double g = ctx.output_grad[0] / dist;
        for (std::size_t i = 0; i < ap->size(); ++i) {
          const double d = (*ap)[i] - (*bp)[i];
          if (!ctx.input_grads[0].empty()) ctx.input_grads[0][i] += g * d;
          if (!ctx.input_grads[1].empty()) ctx.input_grads[1][i] -= g * d;
        }
      });
}

}  // namespace ops
}  // namespace fsv
