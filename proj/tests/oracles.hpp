#pragma once

// Brute-force reference implementations and seeded generators shared by the
// unit, property and acceptance tests. Nothing here calls into the kernels
// it is used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

#include "fsv/metrics.hpp"
#include "fsv/tensor.hpp"

namespace oracle {

using fsv::Shape;
using fsv::Tensor;
using Triple = std::array<std::size_t, 3>;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = -1.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double normal(double stddev = 1.0) {
    return std::normal_distribution<double>(0.0, stddev)(rng_);
  }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool coin() { return index(0, 1) == 1; }

  Tensor tensor(Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = uniform(lo, hi);
    return t;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// "same" output is ceil(in / stride); leading pad is half the total.
inline void same_padding(std::size_t in, std::size_t k, std::size_t s,
                         std::size_t& out, std::size_t& front, std::size_t& total) {
  out = (in + s - 1) / s;
  const long need = static_cast<long>((out - 1) * s + k) - static_cast<long>(in);
  total = need > 0 ? static_cast<std::size_t>(need) : 0;
  front = total / 2;
}

// Direct summation over an explicitly zero-padded copy of the input.
// input [D,H,W,Ci], kernels [Co,kd,kh,kw,Ci] -> [D',H',W',Co]
inline Tensor conv3d(const Tensor& input, const Tensor& kernels, const Tensor* bias,
                     Triple stride, bool same) {
  const std::size_t D = input.dim(0), H = input.dim(1), W = input.dim(2), Ci = input.dim(3);
  const std::size_t Co = kernels.dim(0), kd = kernels.dim(1), kh = kernels.dim(2),
                    kw = kernels.dim(3);
  std::array<std::size_t, 3> front{}, total{}, extent{D, H, W}, k{kd, kh, kw};
  for (int a = 0; a < 3; ++a) {
    std::size_t out = 0;
    if (same) same_padding(extent[a], k[a], stride[a], out, front[a], total[a]);
  }
  const std::size_t PD = D + total[0], PH = H + total[1], PW = W + total[2];
  std::vector<double> padded(PD * PH * PW * Ci, 0.0);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t c = 0; c < Ci; ++c)
          padded[(((d + front[0]) * PH + h + front[1]) * PW + w + front[2]) * Ci + c] =
              input.at({d, h, w, c});
  const std::size_t OD = (PD - kd) / stride[0] + 1, OH = (PH - kh) / stride[1] + 1,
                    OW = (PW - kw) / stride[2] + 1;
  Tensor out({OD, OH, OW, Co});
  for (std::size_t od = 0; od < OD; ++od)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow)
        for (std::size_t co = 0; co < Co; ++co) {
          double acc = bias ? (*bias)[co] : 0.0;
          for (std::size_t i = 0; i < kd; ++i)
            for (std::size_t j = 0; j < kh; ++j)
              for (std::size_t l = 0; l < kw; ++l)
                for (std::size_t c = 0; c < Ci; ++c)
                  acc += padded[(((od * stride[0] + i) * PH + oh * stride[1] + j) * PW +
                                 ow * stride[2] + l) * Ci + c] *
                         kernels.at({co, i, j, l, c});
          out.at({od, oh, ow, co}) = acc;
        }
  return out;
}

struct PoolResult {
  Tensor output;
  Tensor input_grad;  // gradient of sum(output * upstream)
};

inline PoolResult maxpool3d(const Tensor& input, Triple window, Triple stride,
                            const Tensor* upstream = nullptr) {
  const std::size_t D = input.dim(0), H = input.dim(1), W = input.dim(2), C = input.dim(3);
  const std::size_t OD = (D - window[0]) / stride[0] + 1, OH = (H - window[1]) / stride[1] + 1,
                    OW = (W - window[2]) / stride[2] + 1;
  PoolResult r{Tensor({OD, OH, OW, C}), Tensor(input.shape(), 0.0)};
  for (std::size_t od = 0; od < OD; ++od)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow)
        for (std::size_t c = 0; c < C; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          std::array<std::size_t, 3> at{};
          for (std::size_t i = 0; i < window[0]; ++i)
            for (std::size_t j = 0; j < window[1]; ++j)
              for (std::size_t l = 0; l < window[2]; ++l) {
                const double v =
                    input.at({od * stride[0] + i, oh * stride[1] + j, ow * stride[2] + l, c});
                if (v > best) {
                  best = v;
                  at = {od * stride[0] + i, oh * stride[1] + j, ow * stride[2] + l};
                }
              }
          r.output.at({od, oh, ow, c}) = best;
          if (upstream) r.input_grad.at({at[0], at[1], at[2], c}) += upstream->at({od, oh, ow, c});
        }
  return r;
}

// Two-pass mean and biased variance per column, then affine.
inline Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        std::vector<double>* mean_out = nullptr,
                        std::vector<double>* var_out = nullptr) {
  const std::size_t N = x.dim(0), F = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t f = 0; f < F; ++f) {
    double mean = 0.0;
    for (std::size_t n = 0; n < N; ++n) mean += x.at({n, f});
    mean /= static_cast<double>(N);
    double var = 0.0;
    for (std::size_t n = 0; n < N; ++n) var += (x.at({n, f}) - mean) * (x.at({n, f}) - mean);
    var /= static_cast<double>(N);
    for (std::size_t n = 0; n < N; ++n) {
      y.at({n, f}) = gamma[f] * (x.at({n, f}) - mean) / std::sqrt(var + eps) + beta[f];
    }
    if (mean_out) mean_out->push_back(mean);
    if (var_out) var_out->push_back(var);
  }
  return y;
}

inline Tensor global_avg_pool(const Tensor& x) {  // [D,H,W,C] -> [C]
  const std::size_t C = x.dim(3);
  Tensor out({C}, 0.0);
  for (std::size_t d = 0; d < x.dim(0); ++d)
    for (std::size_t h = 0; h < x.dim(1); ++h)
      for (std::size_t w = 0; w < x.dim(2); ++w)
        for (std::size_t c = 0; c < C; ++c) out[c] += x.at({d, h, w, c});
  const double n = static_cast<double>(x.dim(0) * x.dim(1) * x.dim(2));
  for (double& v : out.data()) v /= n;
  return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)}, 0.0);
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j)
      for (std::size_t p = 0; p < a.dim(1); ++p) c.at({i, j}) += a.at({i, p}) * b.at({p, j});
  return c;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < logits.dim(1); ++j) denom += std::exp(logits.at({i, j}));
    total += -std::log(std::exp(logits.at({i, labels[i]})) / denom);
  }
  return total / static_cast<double>(logits.dim(0));
}

inline double center_loss(const Tensor& x, const std::vector<std::size_t>& labels,
                          const Tensor& centers) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.dim(0); ++i)
    for (std::size_t e = 0; e < x.dim(1); ++e) {
      const double r = x.at({i, e}) - centers.at({labels[i], e});
      total += r * r;
    }
  return total / (2.0 * static_cast<double>(x.dim(0)));
}

inline double speaker_bias(const Tensor& w) {
  const std::size_t S = w.dim(0), E = w.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = i + 1; j < S; ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t e = 0; e < E; ++e) {
        dot += w.at({i, e}) * w.at({j, e});
        ni += w.at({i, e}) * w.at({i, e});
        nj += w.at({j, e}) * w.at({j, e});
      }
      const double c = std::max(0.0, dot / std::sqrt(ni * nj));
      total += c * c;
    }
  return 2.0 * total / static_cast<double>(S * (S - 1));
}

// Exhaustive sweep: evaluates FAR/FRR by counting at every candidate
// threshold (each score, plus one above the maximum), then finds the first
// point where FRR >= FAR and interpolates the gap from its predecessor.
struct Eer {
  double eer;
  double threshold;
};

inline Eer eer_sweep(const fsv::ScoreSet& scores) {
  std::vector<double> thresholds;
  for (const auto& s : scores) thresholds.push_back(s.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  double prev_far = 1.0, prev_frr = 0.0, prev_t = thresholds.front();
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    const double t = thresholds[k];
    std::size_t fa = 0, fr = 0, imp = 0, gen = 0;
    for (const auto& s : scores) {
      if (s.genuine) {
        ++gen;
        if (s.score < t) ++fr;
      } else {
        ++imp;
        if (s.score >= t) ++fa;
      }
    }
    const double far = static_cast<double>(fa) / static_cast<double>(imp);
    const double frr = static_cast<double>(fr) / static_cast<double>(gen);
    if (frr >= far) {
      if (frr == far) return {far, t};
      // Intersect the segment (prev_far, prev_frr) -> (far, frr) with FAR = FRR.
      const double d0 = prev_far - prev_frr;
      const double d1 = far - frr;
      const double u = d0 / (d0 - d1);
      const double e = prev_far + u * (far - prev_far);
      const double th = std::isinf(t) ? prev_t : prev_t + u * (t - prev_t);
      return {e, th};
    }
    prev_far = far;
    prev_frr = frr;
    prev_t = t;
  }
  return {1.0, prev_t};
}

}  // namespace oracle
