#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "satinfra/losses.hpp"
#include "satinfra/tensor.hpp"
#include "satinfra/unet.hpp"

namespace satinfra::nn {

struct Sample {
  Tensor image;   // (1,3,S,S)
  Tensor target;  // (1,1,S,S), values 0 or 1
};

struct TrainOptions {
  int epochs = 10;
  double learning_rate = 0.05;
  double momentum = 0.0;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;  // shuffling
  metrics::HybridWeights loss_weights{};
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;     // sample-weighted mean hybrid loss over the epoch
  double jaccard = 0.0;  // pooled over the epoch's training outputs at p > 0.5
};

using TrainingLog = std::vector<EpochRecord>;

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mini-batch gradient descent on the hybrid loss. Deterministic given the
// network's initial parameters, the dataset and options.seed.
TrainingLog train(Network& net, const std::vector<Sample>& dataset, const TrainOptions& options);

// Runs inference in chunks of `batch_size` and returns one (1,1,S,S)
// probability tensor per sample.
std::vector<Tensor> predict(const Network& net, const std::vector<const Tensor*>& images,
                            std::size_t batch_size = 8);

// CSV with header `epoch,loss,jaccard`. Lines in `preamble` are written first
// as `# ` comments.
void write_training_log(const TrainingLog& log, const std::filesystem::path& path,
                        const std::vector<std::string>& preamble = {});

}  // namespace satinfra::nn
