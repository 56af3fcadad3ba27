#include "fsv/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "fsv/errors.hpp"
#include "fsv/ops.hpp"

namespace fsv {

CenterBank CenterBank::zeros(std::size_t num_speakers,
                             std::size_t embedding_dim, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigurationError("center update rate must lie in (0, 1]");
  }
  return CenterBank{Tensor({num_speakers, embedding_dim}, 0.0), alpha};
}

namespace {

void check_rows(const char* op, const Tensor& x, std::span<const std::size_t> labels) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + " expects [N x D] input, got " +
                         shape_string(x.shape()));
  }
  if (labels.size() != x.dim(0)) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(x.dim(0)) + " rows");
  }
}

}  // namespace

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  check_rows("cross_entropy", z, labels);
  const std::size_t n = z.dim(0), s = z.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= s) {
      throw IndexError("label " + std::to_string(labels[i]) +
                       " out of range for " + std::to_string(s) + " classes");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(n * s);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data().data() + i * s;
    const double m = *std::max_element(row, row + s);
    double denom = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
      const double e = std::exp(row[j] - m);
      (*probs)[i * s + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < s; ++j) (*probs)[i * s + j] /= denom;
    total += m + std::log(denom) - row[labels[i]];
  }
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return logits.tape().record(
      "cross_entropy", Tensor::scalar(total / static_cast<double>(n)), {logits},
      [probs, y, n, s](const GradContext& ctx) {
        const double g = ctx.output_grad[0] / static_cast<double>(n);
        auto& gz = ctx.input_grads[0];
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < s; ++j) {
            const double onehot = j == y[i] ? 1.0 : 0.0;
            gz[i * s + j] += g * ((*probs)[i * s + j] - onehot);
          }
        }
      });
}

Var center_loss(Var embeddings, std::span<const std::size_t> labels,
                const CenterBank& bank) {
  const Tensor& x = embeddings.value();
  check_rows("center_loss", x, labels);
  const std::size_t n = x.dim(0), e = x.dim(1);
  if (bank.centers.rank() != 2 || bank.centers.dim(1) != e) {
    throw DimensionError("center bank " + shape_string(bank.centers.shape()) +
                         " does not match embeddings " + shape_string(x.shape()));
  }
  auto residual = std::make_shared<std::vector<double>>(n * e);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= bank.centers.dim(0)) {
      throw IndexError("no center for label " + std::to_string(labels[i]));
    }
    const double* c = bank.centers.data().data() + labels[i] * e;
    for (std::size_t k = 0; k < e; ++k) {
      const double d = x[i * e + k] - c[k];
      (*residual)[i * e + k] = d;
      total += d * d;
    }
  }
  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  return embeddings.tape().record(
      "center_loss", Tensor::scalar(total * scale), {embeddings},
      [residual, n](const GradContext& ctx) {
        const double g = ctx.output_grad[0] / static_cast<double>(n);
        auto& gx = ctx.input_grads[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * (*residual)[i];
      });
}

void update_centers(CenterBank& bank, const Tensor& embeddings,
                    std::span<const std::size_t> labels) {
  check_rows("update_centers", embeddings, labels);
  const std::size_t e = embeddings.dim(1);
  const std::size_t classes = bank.centers.dim(0);
  if (bank.centers.dim(1) != e) {
    throw DimensionError("center bank does not match embedding width");
  }
  std::vector<double> delta(classes * e, 0.0);
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t y = labels[i];
    if (y >= classes) throw IndexError("no center for label " + std::to_string(y));
    ++count[y];
    for (std::size_t k = 0; k < e; ++k) {
      delta[y * e + k] += bank.centers[y * e + k] - embeddings[i * e + k];
    }
  }
  for (std::size_t y = 0; y < classes; ++y) {
    if (count[y] == 0) continue;
    const double step = bank.alpha / static_cast<double>(count[y]);
    for (std::size_t k = 0; k < e; ++k) {
      bank.centers[y * e + k] -= step * delta[y * e + k];
    }
  }
}

Var speaker_bias_loss(Var head_weight) {
  const Tensor& w = head_weight.value();
  if (w.rank() != 2) {
    throw DimensionError("speaker basis must be [S x E], got " +
                         shape_string(w.shape()));
  }
  const std::size_t s = w.dim(0), e = w.dim(1);
  if (s < 2) throw ContractError("speaker-bias loss needs at least 2 speakers");

  auto unit = std::make_shared<std::vector<double>>(s * e);
  auto norms = std::make_shared<std::vector<double>>(s);
  for (std::size_t i = 0; i < s; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < e; ++k) sq += w[i * e + k] * w[i * e + k];
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0)) {
      throw DegenerateBasisError("speaker basis row " + std::to_string(i) +
                                 " has zero norm");
    }
    (*norms)[i] = norm;
    for (std::size_t k = 0; k < e; ++k) (*unit)[i * e + k] = w[i * e + k] / norm;
  }
  auto cosines = std::make_shared<std::vector<double>>(s * s, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = i + 1; j < s; ++j) {
      double c = 0.0;
      for (std::size_t k = 0; k < e; ++k) c += (*unit)[i * e + k] * (*unit)[j * e + k];
      (*cosines)[i * s + j] = c;
      const double pos = std::max(0.0, c);
      total += pos * pos;
    }
  }
  const double coef = 2.0 / (static_cast<double>(s) * static_cast<double>(s - 1));
  return head_weight.tape().record(
      "speaker_bias_loss", Tensor::scalar(coef * total), {head_weight},
      [=](const GradContext& ctx) {
        auto& gw = ctx.input_grads[0];
        const double g = ctx.output_grad[0] * coef;
        for (std::size_t i = 0; i < s; ++i) {
          for (std::size_t j = i + 1; j < s; ++j) {
            const double c = (*cosines)[i * s + j];
            if (c <= 0.0) continue;
            const double dc = g * 2.0 * c;
            const double* ui = unit->data() + i * e;
            const double* uj = unit->data() + j * e;
            // d cos / d w_i = (u_j - cos u_i) / |w_i|, symmetric for w_j.
            for (std::size_t k = 0; k < e; ++k) {
              gw[i * e + k] += dc * (uj[k] - c * ui[k]) / (*norms)[i];
              gw[j * e + k] += dc * (ui[k] - c * uj[k]) / (*norms)[j];
            }
          }
        }
      });
}

LossBreakdown combined_loss(double l_ce, double l_c, double l_bs, double lambda) {
  if (!std::isfinite(l_ce) || !std::isfinite(l_c) || !std::isfinite(l_bs) ||
      !std::isfinite(lambda)) {
    throw NumericError("non-finite loss component (l_ce=" + std::to_string(l_ce) +
                       ", l_c=" + std::to_string(l_c) +
                       ", l_bs=" + std::to_string(l_bs) + ")");
  }
  LossBreakdown out;
  out.l_ce = l_ce;
  out.l_c = l_c;
  out.l_bs = l_bs;
  out.lambda = lambda;
  out.total = l_ce + lambda * l_c + l_bs;
  return out;
}

Var combined_loss(Var l_ce, Var l_c, Var l_bs, double lambda) {
  return ops::add(ops::add(l_ce, ops::scale(l_c, lambda)), l_bs);
}

}  // namespace fsv
