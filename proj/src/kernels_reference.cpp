// Naive serial kernels. One output element at a time, bounds checked per tap.
// Accumulation order matches kernels.cpp exactly.

#include <cstddef>
#include <vector>

#include "satinfra/kernels.hpp"

namespace satinfra::nn::kernels::reference {

namespace {

bool inside(std::ptrdiff_t v, std::size_t extent) {
  return v >= 0 && v < static_cast<std::ptrdiff_t>(extent);
}

}  // namespace

void conv2d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const auto pad = static_cast<std::ptrdiff_t>(d.kernel / 2);
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t co = 0; co < d.out_channels; ++co)
      for (std::size_t y = 0; y < d.height; ++y)
        for (std::size_t x = 0; x < d.width; ++x) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < d.in_channels; ++ci)
            for (std::size_t ky = 0; ky < d.kernel; ++ky)
              for (std::size_t kx = 0; kx < d.kernel; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
                if (!inside(iy, d.height) || !inside(ix, d.width)) continue;
                const double w = weight[((co * d.in_channels + ci) * d.kernel + ky) * d.kernel + kx];
                acc += w * in[((n * d.in_channels + ci) * d.height + iy) * d.width + ix];
              }
          out[((n * d.out_channels + co) * d.height + y) * d.width + x] = acc;
        }
}

void conv2d_backward_input(const ConvDims& d, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
  const auto pad = static_cast<std::ptrdiff_t>(d.kernel / 2);
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t ci = 0; ci < d.in_channels; ++ci)
      for (std::size_t y = 0; y < d.height; ++y)
        for (std::size_t x = 0; x < d.width; ++x) {
          double acc = 0.0;
          for (std::size_t co = 0; co < d.out_channels; ++co)
            for (std::size_t ky = 0; ky < d.kernel; ++ky)
              for (std::size_t kx = 0; kx < d.kernel; ++kx) {
                const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(ky) + pad;
                const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(kx) + pad;
                if (!inside(oy, d.height) || !inside(ox, d.width)) continue;
                const double w = weight[((co * d.in_channels + ci) * d.kernel + ky) * d.kernel + kx];
                acc += w * grad_out[((n * d.out_channels + co) * d.height + oy) * d.width + ox];
              }
          grad_in[((n * d.in_channels + ci) * d.height + y) * d.width + x] = acc;
        }
}

void conv2d_backward_params(const ConvDims& d, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const auto pad = static_cast<std::ptrdiff_t>(d.kernel / 2);
  for (std::size_t co = 0; co < d.out_channels; ++co)
    for (std::size_t ci = 0; ci < d.in_channels; ++ci)
      for (std::size_t ky = 0; ky < d.kernel; ++ky)
        for (std::size_t kx = 0; kx < d.kernel; ++kx) {
          double acc = 0.0;
          for (std::size_t x = 0; x < d.width; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
            if (!inside(ix, d.width)) continue;
            double lane = 0.0;
            for (std::size_t n = 0; n < d.batch; ++n)
              for (std::size_t y = 0; y < d.height; ++y) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                if (!inside(iy, d.height)) continue;
                lane += grad_out[((n * d.out_channels + co) * d.height + y) * d.width + x] *
                        in[((n * d.in_channels + ci) * d.height + iy) * d.width + ix];
              }
            acc += lane;
          }
          grad_weight[((co * d.in_channels + ci) * d.kernel + ky) * d.kernel + kx] = acc;
        }

  for (std::size_t co = 0; co < d.out_channels; ++co) {
    double acc = 0.0;
    for (std::size_t x = 0; x < d.width; ++x) {
      double lane = 0.0;
      for (std::size_t n = 0; n < d.batch; ++n)
        for (std::size_t y = 0; y < d.height; ++y)
          lane += grad_out[((n * d.out_channels + co) * d.height + y) * d.width + x];
      acc += lane;
    }
    grad_bias[co] = acc;
  }
}

void conv_transpose2x2_forward(const UpDims& d, std::span<const double> in,
                               std::span<const double> weight, std::span<const double> bias,
                               std::span<double> out) {
  const std::size_t OH = 2 * d.height, OW = 2 * d.width;
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t co = 0; co < d.out_channels; ++co)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = bias[co];
          const std::size_t k = (oy % 2) * 2 + ox % 2;
          for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
            const double v = in[((n * d.in_channels + ci) * d.height + oy / 2) * d.width + ox / 2];
            acc += v * weight[(ci * d.out_channels + co) * 4 + k];
          }
          out[((n * d.out_channels + co) * OH + oy) * OW + ox] = acc;
        }
}

void conv_transpose2x2_backward_input(const UpDims& d, std::span<const double> grad_out,
                                      std::span<const double> weight, std::span<double> grad_in) {
  const std::size_t OH = 2 * d.height, OW = 2 * d.width;
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t ci = 0; ci < d.in_channels; ++ci)
      for (std::size_t y = 0; y < d.height; ++y)
        for (std::size_t x = 0; x < d.width; ++x) {
          double acc = 0.0;
          for (std::size_t co = 0; co < d.out_channels; ++co)
            for (std::size_t k = 0; k < 4; ++k) {
              const std::size_t oy = 2 * y + k / 2, ox = 2 * x + k % 2;
              acc += weight[(ci * d.out_channels + co) * 4 + k] *
                     grad_out[((n * d.out_channels + co) * OH + oy) * OW + ox];
            }
          grad_in[((n * d.in_channels + ci) * d.height + y) * d.width + x] = acc;
        }
}

void conv_transpose2x2_backward_params(const UpDims& d, std::span<const double> in,
                                       std::span<const double> grad_out,
                                       std::span<double> grad_weight, std::span<double> grad_bias) {
  const std::size_t OH = 2 * d.height, OW = 2 * d.width;
  for (std::size_t ci = 0; ci < d.in_channels; ++ci)
    for (std::size_t co = 0; co < d.out_channels; ++co)
      for (std::size_t k = 0; k < 4; ++k) {
        double acc = 0.0;
        for (std::size_t x = 0; x < d.width; ++x) {
          double lane = 0.0;
          for (std::size_t n = 0; n < d.batch; ++n)
            for (std::size_t y = 0; y < d.height; ++y) {
              const std::size_t oy = 2 * y + k / 2, ox = 2 * x + k % 2;
              lane += in[((n * d.in_channels + ci) * d.height + y) * d.width + x] *
                      grad_out[((n * d.out_channels + co) * OH + oy) * OW + ox];
            }
          acc += lane;
        }
        grad_weight[(ci * d.out_channels + co) * 4 + k] = acc;
      }

  for (std::size_t co = 0; co < d.out_channels; ++co) {
    double acc = 0.0;
    for (std::size_t x = 0; x < OW; ++x) {
      double lane = 0.0;
      for (std::size_t n = 0; n < d.batch; ++n)
        for (std::size_t y = 0; y < OH; ++y)
          lane += grad_out[((n * d.out_channels + co) * OH + y) * OW + x];
      acc += lane;
    }
    grad_bias[co] = acc;
  }
}

void maxpool2x2_forward(std::size_t planes, std::size_t height, std::size_t width,
                        std::span<const double> in, std::span<double> out,
                        std::span<std::uint32_t> argmax) {
  const std::size_t OH = height / 2, OW = width / 2;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < OH; ++y)
      for (std::size_t x = 0; x < OW; ++x) {
        std::size_t best = (p * height + 2 * y) * width + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (p * height + 2 * y + dy) * width + 2 * x + dx;
            if (in[idx] > in[best]) best = idx;
          }
        out[(p * OH + y) * OW + x] = in[best];
        argmax[(p * OH + y) * OW + x] = static_cast<std::uint32_t>(best);
      }
}

void maxpool2x2_backward(std::size_t planes, std::size_t height, std::size_t width,
                         std::span<const double> grad_out, std::span<const std::uint32_t> argmax,
                         std::span<double> grad_in) {
  std::fill(grad_in.begin(), grad_in.begin() + static_cast<std::ptrdiff_t>(planes * height * width),
            0.0);
  const std::size_t outputs = planes * (height / 2) * (width / 2);
  for (std::size_t i = 0; i < outputs; ++i) grad_in[argmax[i]] += grad_out[i];
}

}  // namespace satinfra::nn::kernels::reference
