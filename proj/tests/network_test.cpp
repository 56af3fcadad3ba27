#include <gtest/gtest.h>

#include <cmath>

#include "fsv/errors.hpp"
#include "fsv/network.hpp"
#include "oracles.hpp"

using namespace fsv;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.input_shape = {12, 8, 8, 1};
  c.channels = {3, 4};
  c.first_pool = {2, 2, 2};
  c.pool = {2, 2, 2};
  c.embedding_dim = 6;
  return c;
}

audio::Volume volume(oracle::Gen& gen, const NetConfig& c) {
  audio::Volume v;
  v.frames = c.input_shape[0];
  v.patch_rows = c.input_shape[1];
  v.patch_cols = c.input_shape[2];
  v.data = gen.tensor({c.input_shape[0], c.input_shape[1], c.input_shape[2], c.input_shape[3]},
                      -0.5, 0.5);
  return v;
}

EmbeddingNet make_net(std::uint64_t seed, const NetConfig& c = small_config()) {
  std::mt19937_64 rng(seed);
  return EmbeddingNet::init(c, rng);
}

double norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST(NetConfig, DefaultTraceShapes) {
  const auto shapes = trace_shapes(NetConfig{});
  ASSERT_EQ(shapes.size(), 6u);
  EXPECT_EQ(shapes[0], (Shape{298, 20, 20, 1}));
  EXPECT_EQ(shapes[1], (Shape{74, 10, 10, 16}));
  EXPECT_EQ(shapes[2], (Shape{37, 5, 5, 32}));
  EXPECT_EQ(shapes[3], (Shape{18, 2, 2, 64}));
  EXPECT_EQ(shapes[4], (Shape{64}));
  EXPECT_EQ(shapes[5], (Shape{128}));
}

TEST(NetConfig, InputForDefaultFraming) {
  EXPECT_EQ(NetConfig::input_for(48000, audio::Framing{}),
            (std::array<std::size_t, 4>{298, 20, 20, 1}));
}

TEST(NetConfig, WindowThatDoesNotFitIsConfigurationError) {
  NetConfig c = small_config();
  c.channels = {3, 4, 5, 6};  // 12 -> 6 -> 3 -> 1 -> cannot pool 2
  EXPECT_THROW(trace_shapes(c), ConfigurationError);
  std::mt19937_64 rng(0);
  EXPECT_THROW(EmbeddingNet::init(c, rng), ConfigurationError);
}

TEST(Init, SameSeedIsBitwiseIdentical) {
  const EmbeddingNet a = make_net(5), b = make_net(5);
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i].name, b.parameters()[i].name);
    EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
  }
}

TEST(Init, BiasesZeroAndBatchNormIdentity) {
  const EmbeddingNet net = make_net(6);
  for (const auto& p : net.parameters()) {
    if (p.name.ends_with("bias") || p.name.ends_with("beta")) {
      for (double v : p.value.data()) EXPECT_EQ(v, 0.0) << p.name;
    }
    if (p.name.ends_with("gamma")) {
      for (double v : p.value.data()) EXPECT_EQ(v, 1.0) << p.name;
    }
  }
}

TEST(Init, WeightVarianceMatchesFanIn) {
  NetConfig c = NetConfig{};
  c.channels = {16, 32, 64};
  const EmbeddingNet net = make_net(7, c);
  for (const auto& p : net.parameters()) {
    if (!p.name.ends_with("kernel") && p.name != "dense.weight") continue;
    if (p.value.size() < 10000) continue;
    const std::size_t fan_in = p.name == "dense.weight" ? p.value.dim(1)
                                                        : p.value.size() / p.value.dim(0);
    double mean = 0.0, var = 0.0;
    for (double v : p.value.data()) mean += v;
    mean /= static_cast<double>(p.value.size());
    for (double v : p.value.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(p.value.size() - 1);
    const double want = 2.0 / static_cast<double>(fan_in);
    EXPECT_NEAR(var, want, 0.2 * want) << p.name;
  }
}

TEST(Embed, UnitNormForManyInputs) {
  oracle::Gen gen(8);
  EmbeddingNet net = make_net(9);
  for (int trial = 0; trial < 20; ++trial) {
    EXPECT_NEAR(norm(net.infer(volume(gen, net.config()))), 1.0, 1e-9);
  }
}

TEST(Embed, DeterministicForIdenticalInput) {
  oracle::Gen gen(10);
  const EmbeddingNet net = make_net(11);
  const audio::Volume v = volume(gen, net.config());
  EXPECT_EQ(net.infer(v), net.infer(v));
}

TEST(Embed, EvalDiffersFromTrainWhenStatsDiffer) {
  oracle::Gen gen(12);
  EmbeddingNet net = make_net(13);
  Tensor batch({4, 12, 8, 8, 1});
  for (double& x : batch.data()) x = gen.uniform(-0.5, 0.5);
  // Fresh running statistics (mean 0, var 1) do not match these activations.
  const Tensor eval = net.infer_batch(batch);
  const Tensor train = net.embed_batch(batch, Mode::train);
  EXPECT_GT(oracle::max_abs_diff(eval, train), 1e-6);
}

TEST(Embed, TrainModeUpdatesRunningStatsButInferDoesNot) {
  oracle::Gen gen(14);
  EmbeddingNet net = make_net(15);
  Tensor batch({2, 12, 8, 8, 1});
  for (double& x : batch.data()) x = gen.uniform();
  const auto before = net.bn_states()[0].running_mean;
  net.infer_batch(batch);
  EXPECT_EQ(net.bn_states()[0].running_mean, before);
  net.embed_batch(batch, Mode::train);
  EXPECT_NE(net.bn_states()[0].running_mean, before);
}

TEST(Embed, WrongShapeIsDimensionError) {
  const EmbeddingNet net = make_net(16);
  audio::Volume v;
  v.data = Tensor({11, 8, 8, 1});
  EXPECT_THROW(net.infer(v), DimensionError);
}

TEST(Siamese, IdenticalInputsGiveZeroDistance) {
  oracle::Gen gen(17);
  const EmbeddingNet net = make_net(18);
  const audio::Volume v = volume(gen, net.config());
  EXPECT_EQ(siamese_distance(net, v, v), 0.0);
}

TEST(Siamese, DistanceIsSymmetricAndBounded) {
  oracle::Gen gen(19);
  const EmbeddingNet net = make_net(20);
  for (int trial = 0; trial < 20; ++trial) {
    const audio::Volume a = volume(gen, net.config()), b = volume(gen, net.config());
    const double ab = siamese_distance(net, a, b);
    EXPECT_EQ(ab, siamese_distance(net, b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 2.0);
  }
}

TEST(Siamese, BranchesShareOneParameterSet) {
  oracle::Gen gen(21);
  EmbeddingNet net = make_net(22);
  const SiameseNetwork pair(net);
  const audio::Volume v = volume(gen, net.config());
  const Tensor before = pair.branch(v);
  EXPECT_EQ(pair.branch(v), net.infer(v));
  // Mutating the one parameter set moves both branches together.
  for (double& w : net.parameters().back().value.data()) w += 0.25;
  const Tensor after = pair.branch(v);
  EXPECT_NE(after, before);
  EXPECT_EQ(after, net.infer(v));
  EXPECT_EQ(&pair.shared(), &net);
}

TEST(Logits, ZeroEmbeddingGivesBias) {
  ClassifierHead head;
  head.weight = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  head.bias = Tensor::vector({0.5, -1});
  EXPECT_EQ(logits(head, Tensor({3}, 0.0)).values(), (std::vector<double>{0.5, -1}));
}

TEST(Logits, IdentityWeight) {
  ClassifierHead head;
  head.weight = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  head.bias = Tensor::vector({1, 2, 3});
  EXPECT_EQ(logits(head, Tensor::vector({0.1, 0.2, 0.3})).values(),
            (std::vector<double>{1.1, 2.2, 3.3}));
}

TEST(Logits, RandomMatchesLoopOracle) {
  oracle::Gen gen(23);
  std::mt19937_64 rng(1);
  ClassifierHead head = ClassifierHead::init(5, 4, rng);
  head.bias = gen.tensor({5});
  const Tensor e = gen.tensor({4});
  Tensor want = oracle::matmul(head.weight, e.reshaped({4, 1}));
  for (std::size_t i = 0; i < 5; ++i) want[i] += head.bias[i];
  EXPECT_LT(oracle::max_abs_diff(logits(head, e), want.reshaped({5})), 1e-12);
  EXPECT_THROW(logits(head, Tensor({3})), DimensionError);
}
