#pragma once

// Sat-Unet: a U-Net whose decoder upsamples with 2x2 transposed convolutions.
//
// Block recipe (depth D, base width F):
//   encoder i = 0..D-1   batch-norm, conv3x3, conv3x3, dropout (not i = 0), max-pool
//   bottleneck           batch-norm, conv3x3, conv3x3, dropout        width F * 2^D
//   decoder j = 0..D-1   transposed conv, concat(skip of encoder D-1-j),
//                        batch-norm, conv3x3, conv3x3, dropout         width F * 2^(D-1-j)
//   head                 conv1x1 to one channel, sigmoid
//
// Layer counting convention: the input, every batch-norm, convolution,
// dropout, pooling, transposed convolution and concat, the 1x1 head and the
// sigmoid each count once. ReLU is fused into the 3x3 convolutions and is not
// counted. With D = 5 this gives 2*D + 1 = 11 blocks and 61 layers.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "satinfra/layers.hpp"
#include "satinfra/tensor.hpp"

namespace satinfra::nn {

struct UnetConfig {
  std::uint32_t input_size = 416;
  std::uint32_t base_filters = 32;
  std::uint32_t depth = 5;
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;

  std::uint32_t bottleneck_width() const { return base_filters << depth; }
  void validate() const;  // throws std::invalid_argument
  bool operator==(const UnetConfig&) const = default;
};

struct LayerInfo {
  std::string kind;
  std::string block;  // "input", "encoder0", "bottleneck", "decoder1", "head", ...
  std::size_t out_channels = 0;
};

struct ArchitecturePlan {
  std::vector<LayerInfo> layers;
  std::size_t block_count = 0;  // encoder + bottleneck + decoder blocks
  std::size_t layer_count() const { return layers.size(); }
};

ArchitecturePlan plan_sat_unet(const UnetConfig& config);

class Network {
 public:
  explicit Network(const UnetConfig& config);
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  ~Network();

  const UnetConfig& config() const { return config_; }
  const ArchitecturePlan& plan() const { return plan_; }
  std::size_t layer_count() const { return plan_.layer_count(); }
  std::size_t block_count() const { return plan_.block_count; }

  // (N,3,S,S) -> (N,1,S,S) probabilities. With training = true the
  // activations are cached for backward, dropout is active and batch-norm
  // uses batch statistics.
  Tensor forward(const Tensor& batch, bool training);
  // Const inference path; safe for concurrent readers.
  Tensor infer(const Tensor& batch) const;
  // Propagates d loss / d output; overwrites every parameter gradient.
  void backward(const Tensor& loss_grad);

  // Parameters in declaration order.
  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  // Batch-norm running statistics, in declaration order.
  std::vector<Tensor*> buffers();
  std::size_t parameter_count() const;

  // Selects the dropout mask of the next training forward pass.
  void set_step(std::uint64_t step) { step_ = step; }
  std::uint64_t step() const { return step_; }

 private:
  struct Impl;
  UnetConfig config_;
  ArchitecturePlan plan_;
  std::unique_ptr<Impl> impl_;
  std::uint64_t step_ = 0;
  bool has_forward_ = false;
};

Network build_sat_unet(const UnetConfig& config);

// Checkpoint layout (little-endian):
//   "SUNET1" | u32 input_size | u32 base_filters | u32 depth | f32 dropout |
//   u64 seed | u32 tensor_count | per tensor: u32 element_count, f32 values
// Tensors are the parameters in declaration order followed by the batch-norm
// running statistics.
void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace satinfra::nn
