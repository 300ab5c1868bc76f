#pragma once

// Convolution, transposed-convolution and pooling kernels on NCHW buffers.
//
// Two implementations share one contract: the functions in `reference` are
// naive per-output loops kept for testing, the top-level functions are the
// OpenMP kernels used by the network. Every output element accumulates its
// terms in the same order in both, so results agree bitwise for any thread
// count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace satinfra::nn::kernels {

struct ConvDims {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;  // input height (== output height for same-padded conv)
  std::size_t width = 1;
  std::size_t kernel = 3;  // square kernel, stride 1, zero padding kernel/2
};

// out[n,co] = bias[co] + sum_ci corr(in[n,ci], weight[co,ci])
// weight layout: [out_channels][in_channels][kernel][kernel]
void conv2d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const ConvDims& d, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
// Overwrites grad_weight and grad_bias.
void conv2d_backward_params(const ConvDims& d, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias);

// 2x2 stride-2 transposed convolution; input (H,W) -> output (2H,2W).
// weight layout: [in_channels][out_channels][2][2]
struct UpDims {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;  // input height
  std::size_t width = 1;
};

void conv_transpose2x2_forward(const UpDims& d, std::span<const double> in,
                               std::span<const double> weight, std::span<const double> bias,
                               std::span<double> out);
void conv_transpose2x2_backward_input(const UpDims& d, std::span<const double> grad_out,
                                      std::span<const double> weight, std::span<double> grad_in);
void conv_transpose2x2_backward_params(const UpDims& d, std::span<const double> in,
                                       std::span<const double> grad_out,
                                       std::span<double> grad_weight, std::span<double> grad_bias);

// 2x2 stride-2 max pooling over (N*C) planes of (H,W); H and W even.
// `argmax` receives the flat input index selected for each output element.
void maxpool2x2_forward(std::size_t planes, std::size_t height, std::size_t width,
                        std::span<const double> in, std::span<double> out,
                        std::span<std::uint32_t> argmax);
void maxpool2x2_backward(std::size_t planes, std::size_t height, std::size_t width,
                         std::span<const double> grad_out, std::span<const std::uint32_t> argmax,
                         std::span<double> grad_in);

namespace reference {

void conv2d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const ConvDims& d, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
void conv2d_backward_params(const ConvDims& d, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias);
void conv_transpose2x2_forward(const UpDims& d, std::span<const double> in,
                               std::span<const double> weight, std::span<const double> bias,
                               std::span<double> out);
void conv_transpose2x2_backward_input(const UpDims& d, std::span<const double> grad_out,
                                      std::span<const double> weight, std::span<double> grad_in);
void conv_transpose2x2_backward_params(const UpDims& d, std::span<const double> in,
                                       std::span<const double> grad_out,
                                       std::span<double> grad_weight, std::span<double> grad_bias);
void maxpool2x2_forward(std::size_t planes, std::size_t height, std::size_t width,
                        std::span<const double> in, std::span<double> out,
                        std::span<std::uint32_t> argmax);
void maxpool2x2_backward(std::size_t planes, std::size_t height, std::size_t width,
                         std::span<const double> grad_out, std::span<const std::uint32_t> argmax,
                         std::span<double> grad_in);

}  // namespace reference

}  // namespace satinfra::nn::kernels
