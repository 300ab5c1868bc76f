#include "satinfra/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

// Accumulation orders shared by both implementations:
//   conv forward        bias, then (ci, ky, kx) ascending
//   conv grad input     (co, ky, kx) ascending
//   conv grad weight    per-column lanes summed over (n, y), then lanes summed over x
//   tconv forward       bias, then ci ascending
//   tconv grad input    (co, ky, kx) ascending
//   tconv grad weight   per-column lanes summed over (n, y), then lanes over x
// Out-of-range taps contribute nothing rather than adding zero.

namespace satinfra::nn::kernels {

namespace {

struct Range {
  std::ptrdiff_t lo;
  std::ptrdiff_t hi;
};

// Output positions p in [0, extent) for which p + offset is in [0, extent).
Range valid_range(std::ptrdiff_t extent, std::ptrdiff_t offset) {
  return {std::max<std::ptrdiff_t>(0, -offset), std::min<std::ptrdiff_t>(extent, extent - offset)};
}

}  // namespace

void conv2d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const std::size_t plane = d.height * d.width;
  const auto jobs = static_cast<std::ptrdiff_t>(d.batch * d.out_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / d.out_channels;
    const std::size_t co = static_cast<std::size_t>(job) % d.out_channels;
    double* o = out.data() + (n * d.out_channels + co) * plane;
    std::fill(o, o + plane, bias[co]);
    for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
      const double* ip = in.data() + (n * d.in_channels + ci) * plane;
      const double* wk = weight.data() + (co * d.in_channels + ci) * d.kernel * d.kernel;
      for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
        const std::ptrdiff_t dy = ky - pad;
        const Range ry = valid_range(H, dy);
        for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
          const std::ptrdiff_t dx = kx - pad;
          const Range rx = valid_range(W, dx);
          const double wv = wk[ky * K + kx];
          for (std::ptrdiff_t y = ry.lo; y < ry.hi; ++y) {
            double* orow = o + y * W;
            const double* irow = ip + (y + dy) * W + dx;
            for (std::ptrdiff_t x = rx.lo; x < rx.hi; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvDims& d, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const std::size_t plane = d.height * d.width;
  const auto jobs = static_cast<std::ptrdiff_t>(d.batch * d.in_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / d.in_channels;
    const std::size_t ci = static_cast<std::size_t>(job) % d.in_channels;
    double* gi = grad_in.data() + (n * d.in_channels + ci) * plane;
    std::fill(gi, gi + plane, 0.0);
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      const double* go = grad_out.data() + (n * d.out_channels + co) * plane;
      const double* wk = weight.data() + (co * d.in_channels + ci) * d.kernel * d.kernel;
      for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
        // input row y receives from output row y - dy
        const std::ptrdiff_t dy = -(ky - pad);
        const Range ry = valid_range(H, dy);
        for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
          const std::ptrdiff_t dx = -(kx - pad);
          const Range rx = valid_range(W, dx);
          const double wv = wk[ky * K + kx];
          for (std::ptrdiff_t y = ry.lo; y < ry.hi; ++y) {
            double* grow = gi + y * W;
            const double* orow = go + (y + dy) * W + dx;
            for (std::ptrdiff_t x = rx.lo; x < rx.hi; ++x) grow[x] += wv * orow[x];
          }
        }
      }
    }
  }
}

void conv2d_backward_params(const ConvDims& d, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const std::size_t plane = d.height * d.width;
  const auto jobs = static_cast<std::ptrdiff_t>(d.out_channels * d.in_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t co = static_cast<std::size_t>(job) / d.in_channels;
    const std::size_t ci = static_cast<std::size_t>(job) % d.in_channels;
    std::vector<double> lanes(d.width);
    double* gw = grad_weight.data() + (co * d.in_channels + ci) * d.kernel * d.kernel;
    for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
      const std::ptrdiff_t dy = ky - pad;
      const Range ry = valid_range(H, dy);
      for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
        const std::ptrdiff_t dx = kx - pad;
        const Range rx = valid_range(W, dx);
        std::fill(lanes.begin(), lanes.end(), 0.0);
        for (std::size_t n = 0; n < d.batch; ++n) {
          const double* go = grad_out.data() + (n * d.out_channels + co) * plane;
          const double* ip = in.data() + (n * d.in_channels + ci) * plane;
          for (std::ptrdiff_t y = ry.lo; y < ry.hi; ++y) {
            const double* grow = go + y * W;
            const double* irow = ip + (y + dy) * W + dx;
            for (std::ptrdiff_t x = rx.lo; x < rx.hi; ++x) lanes[x] += grow[x] * irow[x];
          }
        }
        double acc = 0.0;
        for (std::ptrdiff_t x = rx.lo; x < rx.hi; ++x) acc += lanes[x];
        gw[ky * K + kx] = acc;
      }
    }
  }

  const auto channels = static_cast<std::ptrdiff_t>(d.out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t co = 0; co < channels; ++co) {
    std::vector<double> lanes(d.width, 0.0);
    for (std::size_t n = 0; n < d.batch; ++n) {
      const double* go = grad_out.data() + (n * d.out_channels + co) * plane;
      for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) lanes[x] += go[y * W + x];
    }
    double acc = 0.0;
    for (double v : lanes) acc += v;
    grad_bias[co] = acc;
  }
}

void conv_transpose2x2_forward(const UpDims& d, std::span<const double> in,
                               std::span<const double> weight, std::span<const double> bias,
                               std::span<double> out) {
  const std::size_t H = d.height, W = d.width;
  const std::size_t OW = 2 * W;
  const std::size_t in_plane = H * W, out_plane = 4 * in_plane;
  const auto jobs = static_cast<std::ptrdiff_t>(d.batch * d.out_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / d.out_channels;
    const std::size_t co = static_cast<std::size_t>(job) % d.out_channels;
    double* o = out.data() + (n * d.out_channels + co) * out_plane;
    std::fill(o, o + out_plane, bias[co]);
    for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
      const double* ip = in.data() + (n * d.in_channels + ci) * in_plane;
      const double* wk = weight.data() + (ci * d.out_channels + co) * 4;
      for (std::size_t y = 0; y < H; ++y) {
        double* top = o + (2 * y) * OW;
        double* bottom = top + OW;
        const double* irow = ip + y * W;
        for (std::size_t x = 0; x < W; ++x) {
          const double v = irow[x];
          top[2 * x] += v * wk[0];
          top[2 * x + 1] += v * wk[1];
          bottom[2 * x] += v * wk[2];
          bottom[2 * x + 1] += v * wk[3];
        }
      }
    }
  }
}

void conv_transpose2x2_backward_input(const UpDims& d, std::span<const double> grad_out,
                                      std::span<const double> weight, std::span<double> grad_in) {
  const std::size_t H = d.height, W = d.width;
  const std::size_t OW = 2 * W;
  const std::size_t in_plane = H * W, out_plane = 4 * in_plane;
  const auto jobs = static_cast<std::ptrdiff_t>(d.batch * d.in_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / d.in_channels;
    const std::size_t ci = static_cast<std::size_t>(job) % d.in_channels;
    double* gi = grad_in.data() + (n * d.in_channels + ci) * in_plane;
    std::fill(gi, gi + in_plane, 0.0);
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      const double* go = grad_out.data() + (n * d.out_channels + co) * out_plane;
      const double* wk = weight.data() + (ci * d.out_channels + co) * 4;
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t ky = k / 2, kx = k % 2;
        for (std::size_t y = 0; y < H; ++y) {
          const double* orow = go + (2 * y + ky) * OW + kx;
          double* grow = gi + y * W;
          for (std::size_t x = 0; x < W; ++x) grow[x] += wk[k] * orow[2 * x];
        }
      }
    }
  }
}

void conv_transpose2x2_backward_params(const UpDims& d, std::span<const double> in,
                                       std::span<const double> grad_out,
                                       std::span<double> grad_weight, std::span<double> grad_bias) {
  const std::size_t H = d.height, W = d.width;
  const std::size_t OW = 2 * W;
  const std::size_t in_plane = H * W, out_plane = 4 * in_plane;
  const auto jobs = static_cast<std::ptrdiff_t>(d.in_channels * d.out_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t ci = static_cast<std::size_t>(job) / d.out_channels;
    const std::size_t co = static_cast<std::size_t>(job) % d.out_channels;
    std::vector<double> lanes(W);
    double* gw = grad_weight.data() + (ci * d.out_channels + co) * 4;
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t ky = k / 2, kx = k % 2;
      std::fill(lanes.begin(), lanes.end(), 0.0);
      for (std::size_t n = 0; n < d.batch; ++n) {
        const double* ip = in.data() + (n * d.in_channels + ci) * in_plane;
        const double* go = grad_out.data() + (n * d.out_channels + co) * out_plane;
        for (std::size_t y = 0; y < H; ++y) {
          const double* irow = ip + y * W;
          const double* orow = go + (2 * y + ky) * OW + kx;
          for (std::size_t x = 0; x < W; ++x) lanes[x] += irow[x] * orow[2 * x];
        }
      }
      double acc = 0.0;
      for (double v : lanes) acc += v;
      gw[k] = acc;
    }
  }

  const auto channels = static_cast<std::ptrdiff_t>(d.out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t co = 0; co < channels; ++co) {
    std::vector<double> lanes(OW, 0.0);
    for (std::size_t n = 0; n < d.batch; ++n) {
      const double* go = grad_out.data() + (n * d.out_channels + co) * out_plane;
      for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t x = 0; x < OW; ++x) lanes[x] += go[y * OW + x];
    }
    double acc = 0.0;
    for (double v : lanes) acc += v;
    grad_bias[co] = acc;
  }
}

void maxpool2x2_forward(std::size_t planes, std::size_t height, std::size_t width,
                        std::span<const double> in, std::span<double> out,
                        std::span<std::uint32_t> argmax) {
  const std::size_t OH = height / 2, OW = width / 2;
  const auto jobs = static_cast<std::ptrdiff_t>(planes);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < jobs; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * height * width;
    const std::size_t obase = static_cast<std::size_t>(p) * OH * OW;
    for (std::size_t y = 0; y < OH; ++y) {
      for (std::size_t x = 0; x < OW; ++x) {
        std::size_t best = base + (2 * y) * width + 2 * x;
        for (std::size_t k = 1; k < 4; ++k) {
          const std::size_t idx = base + (2 * y + k / 2) * width + 2 * x + k % 2;
          if (in[idx] > in[best]) best = idx;
        }
        out[obase + y * OW + x] = in[best];
        argmax[obase + y * OW + x] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void maxpool2x2_backward(std::size_t planes, std::size_t height, std::size_t width,
                         std::span<const double> grad_out, std::span<const std::uint32_t> argmax,
                         std::span<double> grad_in) {
  const std::size_t per_out = (height / 2) * (width / 2);
  const auto jobs = static_cast<std::ptrdiff_t>(planes);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < jobs; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * height * width;
    std::fill(grad_in.begin() + static_cast<std::ptrdiff_t>(base),
              grad_in.begin() + static_cast<std::ptrdiff_t>(base + height * width), 0.0);
    const std::size_t obase = static_cast<std::size_t>(p) * per_out;
    for (std::size_t i = 0; i < per_out; ++i) grad_in[argmax[obase + i]] += grad_out[obase + i];
  }
}

}  // namespace satinfra::nn::kernels
