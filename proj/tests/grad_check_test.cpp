#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fsv/errors.hpp"
#include "fsv/grad_check.hpp"
#include "fsv/losses.hpp"
#include "fsv/ops.hpp"
#include "oracles.hpp"

using namespace fsv;

namespace {

// Nudges every value at least `gap` away from zero so ReLU/abs-style kinks
// are never straddled by a finite-difference probe.
Tensor away_from_zero(Tensor t, double gap) {
  for (double& v : t.data()) {
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  }
  return t;
}

}  // namespace

TEST(GradCheck, QuadraticAtThree) {
  std::vector<Tensor> params{Tensor::scalar(3.0)};
  const auto f = [](Tape&, std::span<const Var> p) { return ops::sum(ops::mul(p[0], p[0])); };
  const auto report = grad_check(f, params);
  EXPECT_LT(report.max_relative_error, 1e-10);
  EXPECT_NEAR(report.worst_analytic, 6.0, 1e-12);
  EXPECT_EQ(params[0].item(), 3.0);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  std::vector<Tensor> params{Tensor::vector({1, 2, 3})};
  const auto f = [](Tape& t, std::span<const Var>) { return t.constant(Tensor::scalar(4.0)); };
  const auto report = grad_check(f, params);
  EXPECT_EQ(report.max_relative_error, 0.0);
  EXPECT_EQ(report.coordinates, 3u);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(gradient_relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(gradient_relative_error(1e-9, 0.0), 1e-9 / 1e-8);
  EXPECT_DOUBLE_EQ(gradient_relative_error(2.0, 1.0), 0.5);
}

TEST(GradCheck, NonFiniteProbeIsNumericErrorAndRestoresParams) {
  std::vector<Tensor> params{Tensor::scalar(1.0)};
  const auto f = [](Tape& t, std::span<const Var> p) {
    if (p[0].value().item() > 1.0) return t.constant(Tensor::scalar(std::nan("")));
    return ops::sum(p[0]);
  };
  EXPECT_THROW(grad_check(f, params), NumericError);
  EXPECT_EQ(params[0].item(), 1.0);
}

TEST(GradCheck, ElementwiseOps) {
  oracle::Gen gen(1);
  std::vector<Tensor> params{away_from_zero(gen.tensor({3, 4}), 0.05),
                             away_from_zero(gen.tensor({3, 4}), 0.05)};
  const auto f = [](Tape&, std::span<const Var> p) {
    Var a = ops::relu(ops::add(p[0], p[1]));
    Var b = ops::mul(ops::sub(p[0], p[1]), a);
    return ops::mean(ops::mul(ops::scale(b, 1.7), b));
  };
  // Keep the relu argument off its kink as well.
  for (std::size_t i = 0; i < params[0].size(); ++i) {
    if (std::abs(params[0][i] + params[1][i]) < 0.05) params[1][i] += 0.2;
  }
  EXPECT_LT(grad_check(f, params).max_relative_error, 1e-6);
}

TEST(GradCheck, MatmulTransposeLinear) {
  oracle::Gen gen(2);
  std::vector<Tensor> params{gen.tensor({4, 3}), gen.tensor({5, 3}), gen.tensor({5})};
  const auto f = [](Tape&, std::span<const Var> p) {
    Var y = ops::linear(p[0], p[1], p[2]);
    Var z = ops::matmul(y, ops::transpose(y));
    return ops::sum(ops::mul(z, z));
  };
  EXPECT_LT(grad_check(f, params).max_relative_error, 1e-6);
}

TEST(GradCheck, Conv3dAllInputs) {
  oracle::Gen gen(3);
  for (Padding padding : {Padding::valid, Padding::same}) {
    std::vector<Tensor> params{gen.tensor({4, 3, 5, 2}), gen.tensor({3, 2, 3, 2, 2}),
                               gen.tensor({3})};
    const auto f = [padding](Tape& t, std::span<const Var> p) {
      Var y = ops::conv3d(p[0], p[1], p[2], {2, 1, 2}, padding);
      oracle::Gen w(77);
      return ops::sum(ops::mul(ops::mul(y, y), t.constant(w.tensor(y.shape()))));
    };
    EXPECT_LT(grad_check(f, params).max_relative_error, 1e-6);
  }
}

TEST(GradCheck, MaxPool3dAwayFromTies) {
  oracle::Gen gen(4);
  // Distinct, well-separated values: no probe can reorder a window.
  Tensor x({4, 4, 2, 2});
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i);
  std::shuffle(v.begin(), v.end(), gen.engine());
  std::copy(v.begin(), v.end(), x.data().begin());
  std::vector<Tensor> params{x};
  const auto f = [](Tape& t, std::span<const Var> p) {
    Var y = ops::maxpool3d(p[0], {2, 2, 2}, {2, 2, 1});
    oracle::Gen w(5);
    return ops::sum(ops::mul(ops::mul(y, y), t.constant(w.tensor(y.shape()))));
  };
  EXPECT_LT(grad_check(f, params).max_relative_error, 1e-6);
}

TEST(GradCheck, BatchNormTrainAndEval) {
  oracle::Gen gen(6);
  for (Mode mode : {Mode::train, Mode::eval}) {
    std::vector<Tensor> params{gen.tensor({6, 3}, -2, 2), gen.tensor({3}), gen.tensor({3})};
    BatchNormState state = BatchNormState::fresh(3);
    state.running_mean = Tensor::vector({0.1, -0.3, 0.2});
    state.running_var = Tensor::vector({1.5, 0.7, 2.0});
    const auto f = [&state, mode](Tape& t, std::span<const Var> p) {
      BatchNormState scratch = state;
      Var y = ops::batchnorm(p[0], p[1], p[2], scratch, mode);
      oracle::Gen w(8);
      return ops::sum(ops::mul(ops::mul(y, y), t.constant(w.tensor(y.shape()))));
    };
    EXPECT_LT(grad_check(f, params).max_relative_error, 1e-6);
  }
}

TEST(GradCheck, GlobalAvgPoolAndNormalization) {
  oracle::Gen gen(9);
  std::vector<Tensor> params{gen.tensor({2, 3, 2, 2, 4}), gen.tensor({3, 5}), gen.tensor({3, 5})};
  const auto f = [](Tape& t, std::span<const Var> p) {
    Var pooled = ops::global_avg_pool(p[0]);
    Var n = ops::l2_normalize_rows(p[1]);
    Var d = ops::euclidean_distance(n, ops::l2_normalize_rows(p[2]));
    oracle::Gen w(10);
    return ops::add(ops::sum(ops::mul(pooled, t.constant(w.tensor(pooled.shape())))), d);
  };
  EXPECT_LT(grad_check(f, params).max_relative_error, 1e-6);
}

TEST(GradCheck, LossComponents) {
  oracle::Gen gen(11);
  std::vector<Tensor> params{gen.tensor({6, 4}), gen.tensor({5, 4}), gen.tensor({5})};
  const std::vector<std::size_t> labels{0, 3, 1, 4, 1, 2};
  CenterBank bank = CenterBank::zeros(5, 4);
  bank.centers = gen.tensor({5, 4});
  const auto f = [&](Tape&, std::span<const Var> p) {
    Var emb = ops::l2_normalize_rows(p[0]);
    Var logits = ops::linear(emb, p[1], p[2]);
    return combined_loss(cross_entropy(logits, labels), center_loss(emb, labels, bank),
                         speaker_bias_loss(p[1]));
  };
  EXPECT_LT(grad_check(f, params).max_relative_error, 1e-6);
}

TEST(GradCheck, CompositeConvReluPoolAvgMatmulCrossEntropy) {
  oracle::Gen gen(12);
  std::vector<Tensor> params{gen.tensor({2, 6, 6, 6, 1}), gen.tensor({4, 3, 3, 3, 1}, -0.5, 0.5),
                             gen.tensor({4}, -0.1, 0.1), gen.tensor({4, 3})};
  const std::vector<std::size_t> labels{2, 0};
  const auto f = [&](Tape&, std::span<const Var> p) {
    Var y = ops::relu(ops::conv3d(p[0], p[1], p[2], {1, 1, 1}, Padding::same));
    Var z = ops::global_avg_pool(ops::maxpool3d(y, {2, 2, 2}, {2, 2, 2}));
    return cross_entropy(ops::matmul(z, p[3]), labels);
  };
  const auto report = grad_check(f, params);
  // This seeded point keeps every probe clear of ReLU and pooling kinks.
  EXPECT_LT(report.max_relative_error, 1e-4)
      << "param " << report.worst_param << " index " << report.worst_index;
}
