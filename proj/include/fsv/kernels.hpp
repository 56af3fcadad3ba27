#pragma once

// Raw forward/backward kernels over contiguous row-major buffers. These are
// the numeric core behind the differentiable ops in ops.hpp; they carry no
// tape bookkeeping. Every backward kernel accumulates (+=) into its gradient
// outputs, and an empty gradient span means "not needed".

#include <array>
#include <cstddef>
#include <span>

#include "fsv/tensor.hpp"

namespace fsv::kernels {

using Triple = std::array<std::size_t, 3>;

enum class Padding { valid, same };

struct ConvGeometry {
  std::size_t batch = 1;
  Triple in{};        // D, H, W
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Triple kernel{};    // kd, kh, kw
  Triple stride{1, 1, 1};
  Triple pad_front{};  // leading zero padding per axis
  Triple out{};
};

// Output extent and leading pad along one axis. "same" pads symmetrically
// with the odd remainder on the trailing side.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, Padding padding,
                               std::size_t* pad_front = nullptr);

// Input is [D,H,W,Cin] (batch 1) or [N,D,H,W,Cin]; kernels are
// [Co,kd,kh,kw,Cin]. Throws DimensionError on inconsistent shapes.
ConvGeometry conv3d_geometry(const Shape& input, const Shape& kernels,
                             Triple stride, Padding padding);

void conv3d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernels,
                    std::span<const double> bias, std::span<double> output);

void conv3d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> kernels,
                     std::span<const double> out_grad,
                     std::span<double> in_grad,
                     std::span<double> kernel_grad,
                     std::span<double> bias_grad);

struct PoolGeometry {
  std::size_t batch = 1;
  Triple in{};
  std::size_t channels = 0;
  Triple window{};
  Triple stride{};
  Triple out{};
};

PoolGeometry maxpool3d_geometry(const Shape& input, Triple window,
                                Triple stride);

// argmax receives, per output element, the flat input index that won. Ties
// go to the first element in row-major window order.
void maxpool3d_forward(const PoolGeometry& g, std::span<const double> input,
                       std::span<double> output,
                       std::span<std::size_t> argmax);

void maxpool3d_backward(std::span<const std::size_t> argmax,
                        std::span<const double> out_grad,
                        std::span<double> in_grad);

// Batch normalization over a [rows x features] view.
void batchnorm_train_forward(std::size_t rows, std::size_t features,
                             std::span<const double> input,
                             std::span<const double> gamma,
                             std::span<const double> beta, double eps,
                             std::span<double> output,
                             std::span<double> batch_mean,
                             std::span<double> batch_var);

void batchnorm_train_backward(std::size_t rows, std::size_t features,
                              std::span<const double> input,
                              std::span<const double> gamma,
                              std::span<const double> batch_mean,
                              std::span<const double> batch_var, double eps,
                              std::span<const double> out_grad,
                              std::span<double> in_grad,
                              std::span<double> gamma_grad,
                              std::span<double> beta_grad);

void batchnorm_eval_forward(std::size_t rows, std::size_t features,
                            std::span<const double> input,
                            std::span<const double> gamma,
                            std::span<const double> beta,
                            std::span<const double> running_mean,
                            std::span<const double> running_var, double eps,
                            std::span<double> output);

void batchnorm_eval_backward(std::size_t rows, std::size_t features,
                             std::span<const double> input,
                             std::span<const double> gamma,
                             std::span<const double> running_mean,
                             std::span<const double> running_var, double eps,
                             std::span<const double> out_grad,
                             std::span<double> in_grad,
                             std::span<double> gamma_grad,
                             std::span<double> beta_grad);

// [batch x positions x channels] -> [batch x channels]
void global_avg_pool_forward(std::size_t batch, std::size_t positions,
                             std::size_t channels,
                             std::span<const double> input,
                             std::span<double> output);

void global_avg_pool_backward(std::size_t batch, std::size_t positions,
                              std::size_t channels,
                              std::span<const double> out_grad,
                              std::span<double> in_grad);

// c[m x n] = a[m x k] * b[k x n]
void matmul_forward(std::size_t m, std::size_t k, std::size_t n,
                    std::span<const double> a, std::span<const double> b,
                    std::span<double> c);

void matmul_backward(std::size_t m, std::size_t k, std::size_t n,
                     std::span<const double> a, std::span<const double> b,
                     std::span<const double> out_grad,
                     std::span<double> a_grad, std::span<double> b_grad);

}  // namespace fsv::kernels
