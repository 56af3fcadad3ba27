#include "fsv/network.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "fsv/errors.hpp"

namespace fsv {

namespace {

constexpr std::size_t kParamsPerBlock = 3;  // kernel, gamma, beta

Tensor he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Var run_stage(const NetConfig& config, std::vector<BatchNormState>& bn,
              std::span<const Var> params, Var x, Mode mode,
              std::size_t stage) {
  const std::size_t blocks = config.channels.size();
  if (stage < blocks) {
    const std::size_t p = stage * kParamsPerBlock;
    Var y = ops::conv3d(x, params[p], std::nullopt, {1, 1, 1}, Padding::same);
    y = ops::batchnorm(y, params[p + 1], params[p + 2], bn[stage], mode);
    y = ops::relu(y);
    const Triple window = stage == 0 ? config.first_pool : config.pool;
    return ops::maxpool3d(y, window, window);
  }
  if (stage == blocks) {
    const std::size_t p = blocks * kParamsPerBlock;
    Var pooled = ops::global_avg_pool(x);
    Var dense = ops::linear(pooled, params[p], params[p + 1]);
    return ops::l2_normalize_rows(dense);
  }
  throw ContractError("stage " + std::to_string(stage) + " out of range");
}

}  // namespace

std::array<std::size_t, 4> NetConfig::input_for(std::size_t clip_samples,
                                                const audio::Framing& framing) {
  return {audio::frame_count(clip_samples, framing), framing.patch_rows,
          framing.patch_cols(), 1};
}

std::vector<Shape> trace_shapes(const NetConfig& config) {
  if (config.channels.empty()) {
    throw ConfigurationError("network needs at least one conv block");
  }
  if (config.embedding_dim == 0) {
    throw ConfigurationError("embedding_dim must be positive");
  }
  for (auto d : config.input_shape) {
    if (d == 0) throw ConfigurationError("input dimensions must be positive");
  }
  for (auto k : config.kernel) {
    if (k == 0) throw ConfigurationError("kernel extents must be positive");
  }
  std::vector<Shape> shapes;
  Shape cur(config.input_shape.begin(), config.input_shape.end());
  shapes.push_back(cur);
  for (std::size_t b = 0; b < config.channels.size(); ++b) {
    if (config.channels[b] == 0) {
      throw ConfigurationError("block channel counts must be positive");
    }
    const Triple window = b == 0 ? config.first_pool : config.pool;
    for (int a = 0; a < 3; ++a) {
      if (window[a] == 0) throw ConfigurationError("pool windows must be positive");
      if (window[a] > cur[a]) {
        throw ConfigurationError(
            "block " + std::to_string(b) + " pool window " +
            std::to_string(window[a]) + " exceeds extent " +
            std::to_string(cur[a]) + " on axis " + std::to_string(a) +
            " (input " + shape_string(Shape(config.input_shape.begin(),
                                            config.input_shape.end())) +
            ")");
      }
      cur[a] = (cur[a] - window[a]) / window[a] + 1;
    }
    cur[3] = config.channels[b];
    shapes.push_back(cur);
  }
  shapes.push_back({cur[3]});
  shapes.push_back({config.embedding_dim});
  return shapes;
}

EmbeddingNet EmbeddingNet::init(const NetConfig& config, std::mt19937_64& rng) {
  trace_shapes(config);
  EmbeddingNet net;
  net.config_ = config;
  std::size_t in_channels = config.input_shape[3];
  const std::size_t taps = config.kernel[0] * config.kernel[1] * config.kernel[2];
  for (std::size_t b = 0; b < config.channels.size(); ++b) {
    const std::size_t out = config.channels[b];
    const std::string prefix = "block" + std::to_string(b);
    net.params_.push_back(
        {prefix + ".conv.kernel",
         he_normal({out, config.kernel[0], config.kernel[1], config.kernel[2],
                    in_channels},
                   taps * in_channels, rng)});
    net.params_.push_back({prefix + ".bn.gamma", Tensor({out}, 1.0)});
    net.params_.push_back({prefix + ".bn.beta", Tensor({out}, 0.0)});
    BatchNormState state = BatchNormState::fresh(out);
    state.eps = config.bn_eps;
    state.momentum = config.bn_momentum;
    net.bn_.push_back(std::move(state));
    in_channels = out;
  }
  net.params_.push_back(
      {"dense.weight",
       he_normal({config.embedding_dim, in_channels}, in_channels, rng)});
  net.params_.push_back({"dense.bias", Tensor({config.embedding_dim}, 0.0)});
  return net;
}

std::vector<Var> EmbeddingNet::bind(Tape& tape, bool requires_grad) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.leaf(p.value, requires_grad));
  return vars;
}

Var EmbeddingNet::forward_stage(Tape& tape, std::span<const Var> params, Var x,
                                Mode mode, std::size_t stage) {
  (void)tape;
  if (params.size() != params_.size()) {
    throw ContractError("forward needs " + std::to_string(params_.size()) +
                        " parameter Vars, got " + std::to_string(params.size()));
  }
  return run_stage(config_, bn_, params, x, mode, stage);
}

Var EmbeddingNet::forward(Tape& tape, std::span<const Var> params, Var x,
                          Mode mode, std::size_t first_stage) {
  for (std::size_t s = first_stage; s < num_stages(); ++s) {
    x = forward_stage(tape, params, x, mode, s);
  }
  return x;
}

void EmbeddingNet::check_input(const Tensor& batch) const {
  const auto& in = config_.input_shape;
  const Shape& s = batch.shape();
  if (s.size() != 5 || s[1] != in[0] || s[2] != in[1] || s[3] != in[2] ||
      s[4] != in[3]) {
    throw DimensionError(
        "network expects [N," + std::to_string(in[0]) + "," +
        std::to_string(in[1]) + "," + std::to_string(in[2]) + "," +
        std::to_string(in[3]) + "] input, got " + shape_string(s));
  }
}

Tensor EmbeddingNet::embed_batch(const Tensor& batch, Mode mode) {
  check_input(batch);
  Tape tape;
  const auto params = bind(tape, false);
  const Var out = forward(tape, params, tape.constant(batch), mode);
  return out.value();
}

namespace {

Tensor as_batch(const audio::Volume& volume) {
  Shape shape{1};
  const Shape& s = volume.data.shape();
  shape.insert(shape.end(), s.begin(), s.end());
  return volume.data.reshaped(shape);
}

}  // namespace

Tensor EmbeddingNet::embed(const audio::Volume& volume, Mode mode) {
  const Tensor out = embed_batch(as_batch(volume), mode);
  return out.reshaped({config_.embedding_dim});
}

Tensor EmbeddingNet::infer_batch(const Tensor& batch) const {
  check_input(batch);
  std::vector<BatchNormState> bn = bn_;
  Tape tape;
  const auto params = bind(tape, false);
  Var x = tape.constant(batch);
  for (std::size_t s = 0; s < num_stages(); ++s) {
    x = run_stage(config_, bn, params, x, Mode::eval, s);
  }
  return x.value();
}

Tensor EmbeddingNet::infer(const audio::Volume& volume) const {
  return infer_batch(as_batch(volume)).reshaped({config_.embedding_dim});
}

ClassifierHead ClassifierHead::init(std::size_t num_speakers,
                                    std::size_t embedding_dim,
                                    std::mt19937_64& rng) {
  if (num_speakers == 0 || embedding_dim == 0) {
    throw ConfigurationError("classifier head needs positive dimensions");
  }
  ClassifierHead head;
  head.weight = he_normal({num_speakers, embedding_dim}, embedding_dim, rng);
  head.bias = Tensor({num_speakers}, 0.0);
  return head;
}

Tensor logits(const ClassifierHead& head, const Tensor& embedding) {
  const std::size_t s = head.weight.dim(0);
  const std::size_t e = head.weight.dim(1);
  if (embedding.size() != e) {
    throw DimensionError("embedding has " + std::to_string(embedding.size()) +
                         " values, head expects " + std::to_string(e));
  }
  Tensor out({s});
  for (std::size_t i = 0; i < s; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < e; ++j) acc += head.weight[i * e + j] * embedding[j];
    out[i] = acc + head.bias[i];
  }
  return out;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("distance between vectors of different length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double SiameseNetwork::distance(const audio::Volume& a,
                                const audio::Volume& b) const {
  const Tensor ea = branch(a);
  const Tensor eb = branch(b);
  return euclidean(ea.data(), eb.data());
}

double siamese_distance(const EmbeddingNet& net, const audio::Volume& a,
                        const audio::Volume& b) {
  return SiameseNetwork(net).distance(a, b);
}

}  // namespace fsv
