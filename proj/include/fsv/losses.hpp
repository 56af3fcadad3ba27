#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fsv/autograd.hpp"
#include "fsv/tensor.hpp"

namespace fsv {

inline constexpr double kCenterLossWeight = 0.003;
inline constexpr double kCenterUpdateRate = 0.5;

// One center per training speaker. Centers are not on the tape; they move
// only through update_centers.
struct CenterBank {
  Tensor centers;  // [num_speakers, embedding_dim]
  double alpha = kCenterUpdateRate;

  static CenterBank zeros(std::size_t num_speakers, std::size_t embedding_dim,
                          double alpha = kCenterUpdateRate);
};

struct LossBreakdown {
  double l_ce = 0.0;
  double l_c = 0.0;
  double l_bs = 0.0;
  double lambda = kCenterLossWeight;
  double total = 0.0;
};

// Mean over rows of -log softmax(logits)[label], max-subtracted.
Var cross_entropy(Var logits, std::span<const std::size_t> labels);

// (1 / 2N) * sum_i ||x_i - c_{y_i}||^2 with centers held constant.
Var center_loss(Var embeddings, std::span<const std::size_t> labels,
                const CenterBank& bank);

// c_y <- c_y - alpha * mean_{i : y_i = y}(c_y - x_i) for every y in the batch.
void update_centers(CenterBank& bank, const Tensor& embeddings,
                    std::span<const std::size_t> labels);

// Mean over speaker pairs i < j of max(0, cos(w_i, w_j))^2 where w_i is row i
// of the classifier weight. Lies in [0, 1].
Var speaker_bias_loss(Var head_weight);

// total = (l_ce + lambda * l_c) + l_bs. Throws NumericError on a non-finite
// component.
LossBreakdown combined_loss(double l_ce, double l_c, double l_bs,
                            double lambda = kCenterLossWeight);

// Same sum on the tape, with the same evaluation order.
Var combined_loss(Var l_ce, Var l_c, Var l_bs, double lambda = kCenterLossWeight);

}  // namespace fsv
