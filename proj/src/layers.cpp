#include "satinfra/layers.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "satinfra/kernels.hpp"

namespace satinfra::nn {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

void require_channels(const Tensor& in, std::size_t channels, const char* what) {
  if (in.rank() != 4 || in.dim(1) != channels) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) +
                     " channels, got " + in.shape_string());
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               Activation act, const std::string& name)
    : in_(in_channels), out_(out_channels), k_(kernel), act_(act) {
  if (kernel % 2 == 0) throw std::invalid_argument("Conv2d: kernel size must be odd");
  weight_.name = name + ".weight";
  weight_.value = Tensor({out_channels, in_channels, kernel, kernel});
  bias_.name = name + ".bias";
  bias_.value = Tensor({out_channels});
}

Tensor Conv2d::run(const Tensor& in) const {
  require_channels(in, in_, "conv");
  const kernels::ConvDims d{in.dim(0), in_, out_, in.dim(2), in.dim(3), k_};
  Tensor out = Tensor::nchw(d.batch, out_, d.height, d.width);
  kernels::conv2d_forward(d, in.data(), weight_.value.data(), bias_.value.data(), out.data());
  if (act_ == Activation::relu) {
    for (double& v : out.data()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  }
  return out;
}

Tensor Conv2d::forward(const Tensor& in, const PassContext&) {
  input_ = in;
  output_ = run(in);
  return output_;
}

Tensor Conv2d::infer(const Tensor& in) const { return run(in); }

Tensor Conv2d::backward(const Tensor& grad_out) {
  if (input_.empty()) throw std::logic_error("conv backward without forward");
  require_same_shape(grad_out, output_, "conv backward");
  Tensor g = grad_out;
  if (act_ == Activation::relu) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (output_[i] <= 0.0) g[i] = 0.0;
  }
  const kernels::ConvDims d{input_.dim(0), in_, out_, input_.dim(2), input_.dim(3), k_};
  weight_.ensure_grad();
  bias_.ensure_grad();
  kernels::conv2d_backward_params(d, input_.data(), g.data(), weight_.grad.data(),
                                  bias_.grad.data());
  Tensor grad_in(input_.shape());
  kernels::conv2d_backward_input(d, g.data(), weight_.value.data(), grad_in.data());
  return grad_in;
}

// ---------------------------------------------------------------- ConvTranspose2x2

ConvTranspose2x2::ConvTranspose2x2(std::size_t in_channels, std::size_t out_channels,
                                   const std::string& name)
    : in_(in_channels), out_(out_channels) {
  weight_.name = name + ".weight";
  weight_.value = Tensor({in_channels, out_channels, 2, 2});
  bias_.name = name + ".bias";
  bias_.value = Tensor({out_channels});
}

Tensor ConvTranspose2x2::infer(const Tensor& in) const {
  require_channels(in, in_, "transposed conv");
  const kernels::UpDims d{in.dim(0), in_, out_, in.dim(2), in.dim(3)};
  Tensor out = Tensor::nchw(d.batch, out_, 2 * d.height, 2 * d.width);
  kernels::conv_transpose2x2_forward(d, in.data(), weight_.value.data(), bias_.value.data(),
                                     out.data());
  return out;
}

Tensor ConvTranspose2x2::forward(const Tensor& in, const PassContext&) {
  input_ = in;
  return infer(in);
}

Tensor ConvTranspose2x2::backward(const Tensor& grad_out) {
  if (input_.empty()) throw std::logic_error("transposed conv backward without forward");
  const kernels::UpDims d{input_.dim(0), in_, out_, input_.dim(2), input_.dim(3)};
  weight_.ensure_grad();
  bias_.ensure_grad();
  kernels::conv_transpose2x2_backward_params(d, input_.data(), grad_out.data(),
                                             weight_.grad.data(), bias_.grad.data());
  Tensor grad_in(input_.shape());
  kernels::conv_transpose2x2_backward_input(d, grad_out.data(), weight_.value.data(),
                                            grad_in.data());
  return grad_in;
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::size_t channels, const std::string& name)
    : channels_(channels),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0) {
  gamma_.name = name + ".gamma";
  gamma_.value = Tensor({channels}, 1.0);
  beta_.name = name + ".beta";
  beta_.value = Tensor({channels}, 0.0);
}

Tensor BatchNorm2d::forward(const Tensor& in, const PassContext& ctx) {
  if (!ctx.training) return infer(in);
  require_channels(in, channels_, "batch_norm");
  const std::size_t N = in.dim(0), plane = in.dim(2) * in.dim(3);
  const double count = static_cast<double>(N * plane);
  Tensor out(in.shape());
  normalized_ = Tensor(in.shape());
  inv_std_.assign(channels_, 0.0);

  const auto C = static_cast<std::ptrdiff_t>(channels_);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cc = 0; cc < C; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    double mean = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* p = in.raw() + (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) mean += p[i];
    }
    mean /= count;
    double var = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* p = in.raw() + (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
    }
    var /= count;
    const double inv_std = 1.0 / std::sqrt(var + kEpsilon);
    inv_std_[c] = inv_std;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xhat = (in[off + i] - mean) * inv_std;
        normalized_[off + i] = xhat;
        out[off + i] = gamma_.value[c] * xhat + beta_.value[c];
      }
    }
    running_mean_[c] = kMomentum * running_mean_[c] + (1.0 - kMomentum) * mean;
    running_var_[c] = kMomentum * running_var_[c] + (1.0 - kMomentum) * var;
  }
  return out;
}

Tensor BatchNorm2d::infer(const Tensor& in) const {
  require_channels(in, channels_, "batch_norm");
  const std::size_t N = in.dim(0), plane = in.dim(2) * in.dim(3);
  Tensor out(in.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < channels_; ++c) {
      const double inv_std = 1.0 / std::sqrt(running_var_[c] + kEpsilon);
      const double scale = gamma_.value[c] * inv_std;
      const double shift = beta_.value[c] - running_mean_[c] * scale;
      const std::size_t off = (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[off + i] = in[off + i] * scale + shift;
    }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  if (normalized_.empty()) throw std::logic_error("batch_norm backward without training forward");
  require_same_shape(grad_out, normalized_, "batch_norm backward");
  const std::size_t N = grad_out.dim(0), plane = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(N * plane);
  gamma_.ensure_grad();
  beta_.ensure_grad();
  Tensor grad_in(grad_out.shape());

  const auto C = static_cast<std::ptrdiff_t>(channels_);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cc = 0; cc < C; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += grad_out[off + i] * normalized_[off + i];
      }
    }
    gamma_.grad[c] = sum_gx;
    beta_.grad[c] = sum_g;
    const double k = gamma_.value[c] * inv_std_[c] / count;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        grad_in[off + i] =
            k * (count * grad_out[off + i] - sum_g - normalized_[off + i] * sum_gx);
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- Dropout

Dropout::Dropout(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("Dropout: rate must be in [0,1)");
}

Tensor Dropout::forward(const Tensor& in, const PassContext& ctx) {
  if (!ctx.training || rate_ == 0.0) {
    scale_.clear();
    return in;
  }
  const std::uint64_t stream = mix64(seed_ ^ mix64(ctx.step));
  const double keep_scale = 1.0 / (1.0 - rate_);
  scale_.resize(in.size());
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double u = static_cast<double>(mix64(stream + i) >> 11) * 0x1.0p-53;
    scale_[i] = u < rate_ ? 0.0 : keep_scale;
    out[i] = in[i] * scale_[i];
  }
  return out;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  if (scale_.empty()) return grad_out;
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * scale_[i];
  return g;
}

// ---------------------------------------------------------------- MaxPool2x2

Tensor MaxPool2x2::infer(const Tensor& in) const {
  if (in.rank() != 4 || in.dim(2) % 2 || in.dim(3) % 2)
    throw ShapeError("max_pool: spatial dims must be even, got " + in.shape_string());
  Tensor out = Tensor::nchw(in.dim(0), in.dim(1), in.dim(2) / 2, in.dim(3) / 2);
  std::vector<std::uint32_t> argmax(out.size());
  kernels::maxpool2x2_forward(in.dim(0) * in.dim(1), in.dim(2), in.dim(3), in.data(), out.data(),
                              argmax);
  return out;
}

Tensor MaxPool2x2::forward(const Tensor& in, const PassContext&) {
  if (in.rank() != 4 || in.dim(2) % 2 || in.dim(3) % 2)
    throw ShapeError("max_pool: spatial dims must be even, got " + in.shape_string());
  in_shape_ = in.shape();
  Tensor out = Tensor::nchw(in.dim(0), in.dim(1), in.dim(2) / 2, in.dim(3) / 2);
  argmax_.resize(out.size());
  kernels::maxpool2x2_forward(in.dim(0) * in.dim(1), in.dim(2), in.dim(3), in.data(), out.data(),
                              argmax_);
  return out;
}

Tensor MaxPool2x2::backward(const Tensor& grad_out) {
  if (in_shape_.empty()) throw std::logic_error("max_pool backward without forward");
  Tensor grad_in(in_shape_);
  kernels::maxpool2x2_backward(in_shape_[0] * in_shape_[1], in_shape_[2], in_shape_[3],
                               grad_out.data(), argmax_, grad_in.data());
  return grad_in;
}

// ---------------------------------------------------------------- Sigmoid

Tensor Sigmoid::infer(const Tensor& in) const {
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
  return out;
}

Tensor Sigmoid::forward(const Tensor& in, const PassContext&) {
  output_ = infer(in);
  return output_;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
  if (output_.empty()) throw std::logic_error("sigmoid backward without forward");
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * output_[i] * (1.0 - output_[i]);
  return g;
}

// ---------------------------------------------------------------- concat

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw ShapeError("concat: incompatible " + a.shape_string() + " and " + b.shape_string());
  }
  const std::size_t N = a.dim(0), plane = a.dim(2) * a.dim(3);
  const std::size_t ca = a.dim(1), cb = b.dim(1);
  Tensor out = Tensor::nchw(N, ca + cb, a.dim(2), a.dim(3));
  for (std::size_t n = 0; n < N; ++n) {
    std::memcpy(out.raw() + n * (ca + cb) * plane, a.raw() + n * ca * plane,
                ca * plane * sizeof(double));
    std::memcpy(out.raw() + (n * (ca + cb) + ca) * plane, b.raw() + n * cb * plane,
                cb * plane * sizeof(double));
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t a_channels) {
  const std::size_t N = grad.dim(0), C = grad.dim(1), plane = grad.dim(2) * grad.dim(3);
  const std::size_t cb = C - a_channels;
  Tensor a = Tensor::nchw(N, a_channels, grad.dim(2), grad.dim(3));
  Tensor b = Tensor::nchw(N, cb, grad.dim(2), grad.dim(3));
  for (std::size_t n = 0; n < N; ++n) {
    std::memcpy(a.raw() + n * a_channels * plane, grad.raw() + n * C * plane,
                a_channels * plane * sizeof(double));
    std::memcpy(b.raw() + n * cb * plane, grad.raw() + (n * C + a_channels) * plane,
                cb * plane * sizeof(double));
  }
  return {std::move(a), std::move(b)};
}

}  // namespace satinfra::nn
