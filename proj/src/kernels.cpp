#include "fsv/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fsv/errors.hpp"

namespace fsv::kernels {

namespace {

using Index = std::ptrdiff_t;

std::string triple_string(const Triple& t) {
  return std::to_string(t[0]) + "x" + std::to_string(t[1]) + "x" +
         std::to_string(t[2]);
}

// Valid tap range [lo, hi) for one output coordinate along one axis.
inline void tap_range(Index out_pos, Index stride, Index pad, Index kernel,
                      Index in_extent, Index& lo, Index& hi) {
  const Index origin = out_pos * stride - pad;
  lo = std::max<Index>(0, -origin);
  hi = std::min<Index>(kernel, in_extent - origin);
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, Padding padding,
                               std::size_t* pad_front) {
  if (stride == 0) throw ContractError("convolution stride must be >= 1");
  if (kernel == 0) throw DimensionError("kernel extent must be >= 1");
  std::size_t padded = in;
  std::size_t front = 0;
  if (padding == Padding::same) {
    const std::size_t out = (in + stride - 1) / stride;
    const std::size_t needed = (out - 1) * stride + kernel;
    const std::size_t total = needed > in ? needed - in : 0;
    front = total / 2;
    padded = in + total;
  }
  if (kernel > padded) {
    throw DimensionError("kernel extent " + std::to_string(kernel) +
                         " exceeds padded input extent " +
                         std::to_string(padded));
  }
  if (pad_front) *pad_front = front;
  return (padded - kernel) / stride + 1;
}

ConvGeometry conv3d_geometry(const Shape& input, const Shape& kernels,
                             Triple stride, Padding padding) {
  if (input.size() != 4 && input.size() != 5) {
    throw DimensionError("conv3d input must be [D,H,W,C] or [N,D,H,W,C], got " +
                         shape_string(input));
  }
  if (kernels.size() != 5) {
    throw DimensionError("conv3d kernels must be [Co,kd,kh,kw,Cin], got " +
                         shape_string(kernels));
  }
  const std::size_t off = input.size() == 5 ? 1 : 0;
  ConvGeometry g;
  g.batch = off ? input[0] : 1;
  g.in = {input[off], input[off + 1], input[off + 2]};
  g.in_channels = input[off + 3];
  g.out_channels = kernels[0];
  g.kernel = {kernels[1], kernels[2], kernels[3]};
  if (kernels[4] != g.in_channels) {
    throw DimensionError("conv3d kernel channels " + std::to_string(kernels[4]) +
                         " do not match input channels " +
                         std::to_string(g.in_channels));
  }
  g.stride = stride;
  for (int a = 0; a < 3; ++a) {
    g.out[a] = conv_output_extent(g.in[a], g.kernel[a], stride[a], padding,
                                  &g.pad_front[a]);
  }
  return g;
}

void conv3d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels,
                    std::span<const double> bias, std::span<double> output) {
  const std::size_t ci = g.in_channels;
  const std::size_t co = g.out_channels;
  const std::size_t taps = g.kernel[0] * g.kernel[1] * g.kernel[2];

  // Re-lay kernels as [tap][ci][co] so the innermost loop runs over
  // contiguous output channels.
  std::vector<double> wt(taps * ci * co);
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t t = 0; t < taps; ++t) {
      for (std::size_t i = 0; i < ci; ++i) {
        wt[(t * ci + i) * co + o] = kernels[(o * taps + t) * ci + i];
      }
    }
  }

  const Index D = g.in[0], H = g.in[1], W = g.in[2];
  const Index KD = g.kernel[0], KH = g.kernel[1], KW = g.kernel[2];
  const Index OD = g.out[0], OH = g.out[1], OW = g.out[2];

  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* x_n = input.data() + n * D * H * W * ci;
    double* y_n = output.data() + n * OD * OH * OW * co;
    for (Index od = 0; od < OD; ++od) {
      Index a_lo, a_hi;
      tap_range(od, g.stride[0], g.pad_front[0], KD, D, a_lo, a_hi);
      for (Index oh = 0; oh < OH; ++oh) {
        Index b_lo, b_hi;
        tap_range(oh, g.stride[1], g.pad_front[1], KH, H, b_lo, b_hi);
        for (Index ow = 0; ow < OW; ++ow) {
          Index c_lo, c_hi;
          tap_range(ow, g.stride[2], g.pad_front[2], KW, W, c_lo, c_hi);
          double* __restrict acc = y_n + ((od * OH + oh) * OW + ow) * co;
          if (bias.empty()) {
            std::fill(acc, acc + co, 0.0);
          } else {
            std::copy(bias.begin(), bias.end(), acc);
          }
          for (Index a = a_lo; a < a_hi; ++a) {
            const Index id = od * g.stride[0] - g.pad_front[0] + a;
            for (Index b = b_lo; b < b_hi; ++b) {
              const Index ih = oh * g.stride[1] - g.pad_front[1] + b;
              const Index iw0 = ow * g.stride[2] - g.pad_front[2];
              const double* x_row = x_n + ((id * H + ih) * W + iw0) * ci;
              const double* w_row = wt.data() + ((a * KH + b) * KW) * ci * co;
              for (Index c = c_lo; c < c_hi; ++c) {
                const double* __restrict xv = x_row + c * ci;
                const double* __restrict wv = w_row + c * ci * co;
                for (std::size_t i = 0; i < ci; ++i) {
                  const double x = xv[i];
                  const double* __restrict w = wv + i * co;
                  for (std::size_t o = 0; o < co; ++o) acc[o] += x * w[o];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> kernels,
                     std::span<const double> out_grad,
                     std::span<double> in_grad, std::span<double> kernel_grad,
                     std::span<double> bias_grad) {
  const std::size_t ci = g.in_channels;
  const std::size_t co = g.out_channels;
  const std::size_t taps = g.kernel[0] * g.kernel[1] * g.kernel[2];
  const bool want_input = !in_grad.empty();
  const bool want_kernel = !kernel_grad.empty();

  // Kernel gradient accumulates in [tap][ci][co] and is folded back at the end.
  std::vector<double> dwt(want_kernel ? taps * ci * co : 0, 0.0);

  const Index D = g.in[0], H = g.in[1], W = g.in[2];
  const Index KD = g.kernel[0], KH = g.kernel[1], KW = g.kernel[2];
  const Index OD = g.out[0], OH = g.out[1], OW = g.out[2];

  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* x_n = input.data() + n * D * H * W * ci;
    double* dx_n = want_input ? in_grad.data() + n * D * H * W * ci : nullptr;
    const double* gy_n = out_grad.data() + n * OD * OH * OW * co;
    for (Index od = 0; od < OD; ++od) {
      Index a_lo, a_hi;
      tap_range(od, g.stride[0], g.pad_front[0], KD, D, a_lo, a_hi);
      for (Index oh = 0; oh < OH; ++oh) {
        Index b_lo, b_hi;
        tap_range(oh, g.stride[1], g.pad_front[1], KH, H, b_lo, b_hi);
        for (Index ow = 0; ow < OW; ++ow) {
          Index c_lo, c_hi;
          tap_range(ow, g.stride[2], g.pad_front[2], KW, W, c_lo, c_hi);
          const double* __restrict gy = gy_n + ((od * OH + oh) * OW + ow) * co;
          if (!bias_grad.empty()) {
            for (std::size_t o = 0; o < co; ++o) bias_grad[o] += gy[o];
          }
          for (Index a = a_lo; a < a_hi; ++a) {
            const Index id = od * g.stride[0] - g.pad_front[0] + a;
            for (Index b = b_lo; b < b_hi; ++b) {
              const Index ih = oh * g.stride[1] - g.pad_front[1] + b;
              const Index iw0 = ow * g.stride[2] - g.pad_front[2];
              const std::size_t row = ((id * H + ih) * W + iw0) * ci;
              for (Index c = c_lo; c < c_hi; ++c) {
                const std::size_t tap = (a * KH + b) * KW + c;
                if (want_kernel) {
                  const double* __restrict xv = x_n + row + c * ci;
                  double* __restrict dw = dwt.data() + tap * ci * co;
                  for (std::size_t i = 0; i < ci; ++i) {
                    const double x = xv[i];
                    double* __restrict d = dw + i * co;
                    for (std::size_t o = 0; o < co; ++o) d[o] += x * gy[o];
                  }
                }
                if (want_input) {
                  double* __restrict dxv = dx_n + row + c * ci;
                  for (std::size_t o = 0; o < co; ++o) {
                    const double go = gy[o];
                    const double* __restrict w =
                        kernels.data() + (o * taps + tap) * ci;
                    for (std::size_t i = 0; i < ci; ++i) dxv[i] += go * w[i];
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  if (want_kernel) {
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t t = 0; t < taps; ++t) {
        for (std::size_t i = 0; i < ci; ++i) {
          kernel_grad[(o * taps + t) * ci + i] += dwt[(t * ci + i) * co + o];
        }
      }
    }
  }
}

PoolGeometry maxpool3d_geometry(const Shape& input, Triple window,
                                Triple stride) {
  if (input.size() != 4 && input.size() != 5) {
    throw DimensionError(
        "maxpool3d input must be [D,H,W,C] or [N,D,H,W,C], got " +
        shape_string(input));
  }
  const std::size_t off = input.size() == 5 ? 1 : 0;
  PoolGeometry g;
  g.batch = off ? input[0] : 1;
  g.in = {input[off], input[off + 1], input[off + 2]};
  g.channels = input[off + 3];
  g.window = window;
  g.stride = stride;
  for (int a = 0; a < 3; ++a) {
    if (window[a] == 0 || stride[a] == 0) {
      throw ContractError("maxpool3d window and stride must be >= 1");
    }
    if (window[a] > g.in[a]) {
      throw DimensionError("maxpool3d window " + triple_string(window) +
                           " exceeds input " + triple_string(g.in));
    }
    g.out[a] = (g.in[a] - window[a]) / stride[a] + 1;
  }
  return g;
}

void maxpool3d_forward(const PoolGeometry& g, std::span<const double> input,
                       std::span<double> output,
                       std::span<std::size_t> argmax) {
  const std::size_t C = g.channels;
  const std::size_t D = g.in[0], H = g.in[1], W = g.in[2];
  const std::size_t OD = g.out[0], OH = g.out[1], OW = g.out[2];
  std::size_t out_index = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const std::size_t base_n = n * D * H * W * C;
    for (std::size_t od = 0; od < OD; ++od) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double* best = output.data() + out_index * C;
          std::size_t* best_at = argmax.data() + out_index * C;
          bool first = true;
          for (std::size_t a = 0; a < g.window[0]; ++a) {
            const std::size_t id = od * g.stride[0] + a;
            for (std::size_t b = 0; b < g.window[1]; ++b) {
              const std::size_t ih = oh * g.stride[1] + b;
              for (std::size_t c = 0; c < g.window[2]; ++c) {
                const std::size_t iw = ow * g.stride[2] + c;
                const std::size_t at = base_n + ((id * H + ih) * W + iw) * C;
                const double* x = input.data() + at;
                if (first) {
                  for (std::size_t ch = 0; ch < C; ++ch) {
                    best[ch] = x[ch];
                    best_at[ch] = at + ch;
                  }
                  first = false;
                  continue;
                }
                for (std::size_t ch = 0; ch < C; ++ch) {
                  // Strict comparison keeps the first maximum on ties.
                  if (x[ch] > best[ch]) {
                    best[ch] = x[ch];
                    best_at[ch] = at + ch;
                  }
                }
              }
            }
          }
          ++out_index;
        }
      }
    }
  }
}

void maxpool3d_backward(std::span<const std::size_t> argmax,
                        std::span<const double> out_grad,
                        std::span<double> in_grad) {
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    in_grad[argmax[i]] += out_grad[i];
  }
}

void batchnorm_train_forward(std::size_t rows, std::size_t features,
                             std::span<const double> input,
                             std::span<const double> gamma,
                             std::span<const double> beta, double eps,
                             std::span<double> output,
                             std::span<double> batch_mean,
                             std::span<double> batch_var) {
  const std::size_t F = features;
  std::fill(batch_mean.begin(), batch_mean.end(), 0.0);
  std::fill(batch_var.begin(), batch_var.end(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * F;
    for (std::size_t f = 0; f < F; ++f) batch_mean[f] += x[f];
  }
  for (std::size_t f = 0; f < F; ++f) batch_mean[f] /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * F;
    for (std::size_t f = 0; f < F; ++f) {
      const double d = x[f] - batch_mean[f];
      batch_var[f] += d * d;
    }
  }
  std::vector<double> scale(F), shift(F);
  for (std::size_t f = 0; f < F; ++f) {
    batch_var[f] /= static_cast<double>(rows);
    const double inv_std = 1.0 / std::sqrt(batch_var[f] + eps);
    scale[f] = gamma[f] * inv_std;
    shift[f] = beta[f];
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * F;
    double* y = output.data() + r * F;
    for (std::size_t f = 0; f < F; ++f) {
      y[f] = (x[f] - batch_mean[f]) * scale[f] + shift[f];
    }
  }
}

void batchnorm_train_backward(std::size_t rows, std::size_t features,
                              std::span<const double> input,
                              std::span<const double> gamma,
                              std::span<const double> batch_mean,
                              std::span<const double> batch_var, double eps,
                              std::span<const double> out_grad,
                              std::span<double> in_grad,
                              std::span<double> gamma_grad,
                              std::span<double> beta_grad) {
  const std::size_t F = features;
  std::vector<double> inv_std(F), sum_g(F, 0.0), sum_gx(F, 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    inv_std[f] = 1.0 / std::sqrt(batch_var[f] + eps);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * F;
    const double* gy = out_grad.data() + r * F;
    for (std::size_t f = 0; f < F; ++f) {
      const double xhat = (x[f] - batch_mean[f]) * inv_std[f];
      sum_g[f] += gy[f];
      sum_gx[f] += gy[f] * xhat;
    }
  }
  if (!gamma_grad.empty()) {
    for (std::size_t f = 0; f < F; ++f) gamma_grad[f] += sum_gx[f];
  }
  if (!beta_grad.empty()) {
    for (std::size_t f = 0; f < F; ++f) beta_grad[f] += sum_g[f];
  }
  if (in_grad.empty()) return;
  const double n = static_cast<double>(rows);
  std::vector<double> k(F), mean_g(F), mean_gx(F);
  for (std::size_t f = 0; f < F; ++f) {
    k[f] = gamma[f] * inv_std[f];
    mean_g[f] = sum_g[f] / n;
    mean_gx[f] = sum_gx[f] / n;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * F;
    const double* gy = out_grad.data() + r * F;
    double* dx = in_grad.data() + r * F;
    for (std::size_t f = 0; f < F; ++f) {
      const double xhat = (x[f] - batch_mean[f]) * inv_std[f];
      dx[f] += k[f] * (gy[f] - mean_g[f] - xhat * mean_gx[f]);
    }
  }
}

void batchnorm_eval_forward(std::size_t rows, std::size_t features,
                            std::span<const double> input,
                            std::span<const double> gamma,
                            std::span<const double> beta,
                            std::span<const double> running_mean,
                            std::span<const double> running_var, double eps,
                            std::span<double> output) {
  const std::size_t F = features;
  std::vector<double> scale(F);
  for (std::size_t f = 0; f < F; ++f) {
    scale[f] = gamma[f] / std::sqrt(running_var[f] + eps);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * F;
    double* y = output.data() + r * F;
    for (std::size_t f = 0; f < F; ++f) {
      y[f] = (x[f] - running_mean[f]) * scale[f] + beta[f];
    }
  }
}

void batchnorm_eval_backward(std::size_t rows, std::size_t features,
                             std::span<const double> input,
                             std::span<const double> gamma,
                             std::span<const double> running_mean,
                             std::span<const double> running_var, double eps,
                             std::span<const double> out_grad,
                             std::span<double> in_grad,
                             std::span<double> gamma_grad,
                             std::span<double> beta_grad) {
  const std::size_t F = features;
  std::vector<double> inv_std(F);
  for (std::size_t f = 0; f < F; ++f) {
    inv_std[f] = 1.0 / std::sqrt(running_var[f] + eps);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * F;
    const double* gy = out_grad.data() + r * F;
    for (std::size_t f = 0; f < F; ++f) {
      if (!gamma_grad.empty()) {
        gamma_grad[f] += gy[f] * (x[f] - running_mean[f]) * inv_std[f];
      }
      if (!beta_grad.empty()) beta_grad[f] += gy[f];
      if (!in_grad.empty()) in_grad[r * F + f] += gy[f] * gamma[f] * inv_std[f];
    }
  }
}

void global_avg_pool_forward(std::size_t batch, std::size_t positions,
                             std::size_t channels,
                             std::span<const double> input,
                             std::span<double> output) {
  const double inv = 1.0 / static_cast<double>(positions);
  for (std::size_t n = 0; n < batch; ++n) {
    double* y = output.data() + n * channels;
    std::fill(y, y + channels, 0.0);
    for (std::size_t p = 0; p < positions; ++p) {
      const double* x = input.data() + (n * positions + p) * channels;
      for (std::size_t c = 0; c < channels; ++c) y[c] += x[c];
    }
    for (std::size_t c = 0; c < channels; ++c) y[c] *= inv;
  }
}

void global_avg_pool_backward(std::size_t batch, std::size_t positions,
                              std::size_t channels,
                              std::span<const double> out_grad,
                              std::span<double> in_grad) {
  const double inv = 1.0 / static_cast<double>(positions);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* gy = out_grad.data() + n * channels;
    for (std::size_t p = 0; p < positions; ++p) {
      double* dx = in_grad.data() + (n * positions + p) * channels;
      for (std::size_t c = 0; c < channels; ++c) dx[c] += gy[c] * inv;
    }
  }
}

void matmul_forward(std::size_t m, std::size_t k, std::size_t n,
                    std::span<const double> a, std::span<const double> b,
                    std::span<double> c) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict row = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* __restrict brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

void matmul_backward(std::size_t m, std::size_t k, std::size_t n,
                     std::span<const double> a, std::span<const double> b,
                     std::span<const double> out_grad,
                     std::span<double> a_grad, std::span<double> b_grad) {
  // dA = G * B^T
  if (!a_grad.empty()) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* g = out_grad.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b.data() + p * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[j] * brow[j];
        a_grad[i * k + p] += s;
      }
    }
  }
  // dB = A^T * G
  if (!b_grad.empty()) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* g = out_grad.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        double* __restrict drow = b_grad.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) drow[j] += av * g[j];
      }
    }
  }
}

}  // namespace fsv::kernels
