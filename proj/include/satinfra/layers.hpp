#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "satinfra/tensor.hpp"

namespace satinfra::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;      // allocated on first backward
  Tensor velocity;  // allocated on first momentum step

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape());
  }
};

struct PassContext {
  bool training = false;
  std::uint64_t step = 0;  // selects the dropout mask
};

// A layer with one input and one output. `forward` caches what `backward`
// needs; `infer` is the const inference path and caches nothing.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string_view kind() const = 0;
  virtual Tensor forward(const Tensor& in, const PassContext& ctx) = 0;
  virtual Tensor infer(const Tensor& in) const = 0;
  // Returns d loss / d input and overwrites parameter gradients.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
  virtual std::vector<const Param*> params() const { return {}; }
  // Non-trainable state persisted with the parameters (batch-norm running stats).
  virtual std::vector<Tensor*> buffers() { return {}; }
};

enum class Activation { none, relu };

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         Activation act, const std::string& name);
  std::string_view kind() const override { return "conv"; }
  Tensor forward(const Tensor& in, const PassContext& ctx) override;
  Tensor infer(const Tensor& in) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::vector<const Param*> params() const override { return {&weight_, &bias_}; }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return k_; }

 private:
  Tensor run(const Tensor& in) const;

  std::size_t in_, out_, k_;
  Activation act_;
  Param weight_, bias_;
  Tensor input_, output_;
};

class ConvTranspose2x2 final : public Layer {
 public:
  ConvTranspose2x2(std::size_t in_channels, std::size_t out_channels, const std::string& name);
  std::string_view kind() const override { return "transposed_conv"; }
  Tensor forward(const Tensor& in, const PassContext& ctx) override;
  Tensor infer(const Tensor& in) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::vector<const Param*> params() const override { return {&weight_, &bias_}; }

 private:
  std::size_t in_, out_;
  Param weight_, bias_;
  Tensor input_;
};

class BatchNorm2d final : public Layer {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;  // weight kept by the running averages

  BatchNorm2d(std::size_t channels, const std::string& name);
  std::string_view kind() const override { return "batch_norm"; }
  Tensor forward(const Tensor& in, const PassContext& ctx) override;
  Tensor infer(const Tensor& in) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<const Param*> params() const override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }

  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }

 private:
  std::size_t channels_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor normalized_;            // cached x-hat
  std::vector<double> inv_std_;  // cached per channel
};

// Inverted dropout. The keep mask is a pure function of (seed, step, index).
class Dropout final : public Layer {
 public:
  Dropout(double rate, std::uint64_t seed);
  std::string_view kind() const override { return "dropout"; }
  Tensor forward(const Tensor& in, const PassContext& ctx) override;
  Tensor infer(const Tensor& in) const override { return in; }
  Tensor backward(const Tensor& grad_out) override;
  double rate() const { return rate_; }

 private:
  double rate_;
  std::uint64_t seed_;
  std::vector<double> scale_;  // 0 or 1/(1-rate) per element, empty when inactive
};

class MaxPool2x2 final : public Layer {
 public:
  std::string_view kind() const override { return "max_pool"; }
  Tensor forward(const Tensor& in, const PassContext& ctx) override;
  Tensor infer(const Tensor& in) const override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<std::size_t> in_shape_;
  std::vector<std::uint32_t> argmax_;
};

class Sigmoid final : public Layer {
 public:
  std::string_view kind() const override { return "sigmoid"; }
  Tensor forward(const Tensor& in, const PassContext& ctx) override;
  Tensor infer(const Tensor& in) const override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor output_;
};

// Channel concatenation of two (N,C,H,W) tensors with equal N, H, W.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits a gradient of concat_channels(a, b) back into its two parts.
std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t a_channels);

// Counter-based hash used for dropout masks and derived seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace satinfra::nn
