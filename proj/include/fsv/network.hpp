#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fsv/audio.hpp"
#include "fsv/autograd.hpp"
#include "fsv/ops.hpp"
#include "fsv/tensor.hpp"

namespace fsv {

// Reference embedding architecture: one block per entry of `channels`, each
// conv3d(kernel, same, stride 1) -> batchnorm -> relu -> maxpool3d, where the
// first block pools with `first_pool` and the rest with `pool` (stride equal
// to window). Then global average pooling, a dense layer to embedding_dim and
// L2 normalization.
struct NetConfig {
  std::array<std::size_t, 4> input_shape{298, 20, 20, 1};  // D, H, W, C
  std::vector<std::size_t> channels{16, 32, 64};
  Triple kernel{3, 3, 3};
  Triple first_pool{4, 2, 2};
  Triple pool{2, 2, 2};
  std::size_t embedding_dim = 128;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  // Input shape for a framing/duration pair.
  static std::array<std::size_t, 4> input_for(std::size_t clip_samples,
                                              const audio::Framing& framing);
};

// Shapes after every stage (per sample): input, each block output, pooled
// features, embedding. Throws ConfigurationError when a window does not fit.
std::vector<Shape> trace_shapes(const NetConfig& config);

struct NamedTensor {
  std::string name;
  Tensor value;
};

class EmbeddingNet {
 public:
  // He-normal conv/dense weights (variance 2 / fan_in), zero dense bias,
  // gamma = 1, beta = 0. Deterministic given the rng state.
  static EmbeddingNet init(const NetConfig& config, std::mt19937_64& rng);

  const NetConfig& config() const { return config_; }
  std::size_t num_blocks() const { return config_.channels.size(); }
  // Stage indices: 0..num_blocks-1 are conv blocks, num_blocks is the head.
  std::size_t num_stages() const { return num_blocks() + 1; }

  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<BatchNormState>& bn_states() { return bn_; }
  const std::vector<BatchNormState>& bn_states() const { return bn_; }

  // Leaf Vars for every parameter, in parameters() order.
  std::vector<Var> bind(Tape& tape, bool requires_grad = true) const;

  // Runs stages [first_stage, num_stages) on x, which must be the activation
  // entering first_stage with a leading batch axis. Train mode updates the
  // batchnorm running statistics.
  Var forward(Tape& tape, std::span<const Var> params, Var x, Mode mode,
              std::size_t first_stage = 0);
  Var forward_stage(Tape& tape, std::span<const Var> params, Var x, Mode mode,
                    std::size_t stage);

  // Unit-norm embeddings. batch is [N, D, H, W, C]; result is [N, E].
  Tensor embed_batch(const Tensor& batch, Mode mode);
  Tensor embed(const audio::Volume& volume, Mode mode);

  // Eval-mode inference that leaves the network untouched.
  Tensor infer(const audio::Volume& volume) const;
  Tensor infer_batch(const Tensor& batch) const;

 private:
  void check_input(const Tensor& batch) const;

  NetConfig config_;
  std::vector<NamedTensor> params_;
  std::vector<BatchNormState> bn_;
};

// Per-speaker basis vectors (rows of weight) and biases for the
// classification logits.
struct ClassifierHead {
  Tensor weight;  // [num_speakers, embedding_dim]
  Tensor bias;    // [num_speakers]

  static ClassifierHead init(std::size_t num_speakers,
                             std::size_t embedding_dim, std::mt19937_64& rng);
  std::size_t num_speakers() const { return weight.dim(0); }
};

// weight * embedding + bias
Tensor logits(const ClassifierHead& head, const Tensor& embedding);

// Both branches run the same parameter set; there is nothing to copy.
class SiameseNetwork {
 public:
  explicit SiameseNetwork(const EmbeddingNet& shared) : shared_(&shared) {}

  const EmbeddingNet& shared() const { return *shared_; }
  Tensor branch(const audio::Volume& volume) const {
    return shared_->infer(volume);
  }
  double distance(const audio::Volume& a, const audio::Volume& b) const;

 private:
  const EmbeddingNet* shared_;
};

// Euclidean distance between the unit embeddings of a and b, in [0, 2].
double siamese_distance(const EmbeddingNet& net, const audio::Volume& a,
                        const audio::Volume& b);

double euclidean(std::span<const double> a, std::span<const double> b);

}  // namespace fsv
