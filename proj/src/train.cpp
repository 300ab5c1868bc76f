#include "satinfra/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace satinfra::nn {

namespace {

void sgd_step(Network& net, double lr, double momentum) {
  for (Param* p : net.parameters()) {
    if (p->grad.size() != p->value.size()) continue;
    if (momentum > 0.0) {
      if (p->velocity.size() != p->value.size()) p->velocity = Tensor(p->value.shape());
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        p->velocity[i] = momentum * p->velocity[i] - lr * p->grad[i];
        p->value[i] += p->velocity[i];
      }
    } else {
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
    }
  }
}

}  // namespace

TrainingLog train(Network& net, const std::vector<Sample>& dataset, const TrainOptions& options) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (options.batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  const std::size_t S = net.config().input_size;
  for (const Sample& s : dataset) {
    if (s.image.shape() != std::vector<std::size_t>{1, 3, S, S} ||
        s.target.shape() != std::vector<std::size_t>{1, 1, S, S}) {
      throw ShapeError("train: sample shapes " + s.image.shape_string() + " / " +
                       s.target.shape_string() + " do not match input size " + std::to_string(S));
    }
  }

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(dataset.size());
  TrainingLog log;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    metrics::Overlap overlap;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      std::vector<const Tensor*> images, targets;
      for (std::size_t k = start; k < stop; ++k) {
        images.push_back(&dataset[order[k]].image);
        targets.push_back(&dataset[order[k]].target);
      }
      const Tensor batch = stack(images);
      const Tensor target = stack(targets);

      const Tensor pred = net.forward(batch, true);
      auto [loss, grad] = metrics::hybrid_loss_with_grad(pred, target, options.loss_weights);
      if (!std::isfinite(loss)) {
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(net.step()));
      }
      net.backward(grad);
      sgd_step(net, options.learning_rate, options.momentum);
      net.set_step(net.step() + 1);

      loss_sum += loss * static_cast<double>(stop - start);
      overlap += metrics::overlap_thresholded(pred.data(), target.data());
    }
    log.push_back({epoch, loss_sum / static_cast<double>(dataset.size()), overlap.jaccard()});
  }
  return log;
}

std::vector<Tensor> predict(const Network& net, const std::vector<const Tensor*>& images,
                            std::size_t batch_size) {
  std::vector<Tensor> out;
  out.reserve(images.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t stop = std::min(images.size(), start + batch_size);
    const Tensor batch =
        stack(std::span<const Tensor* const>(images.data() + start, stop - start));
    const Tensor pred = net.infer(batch);
    for (std::size_t k = 0; k < stop - start; ++k) out.push_back(pred.sample(k));
  }
  return out;
}

void write_training_log(const TrainingLog& log, const std::filesystem::path& path,
                        const std::vector<std::string>& preamble) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& line : preamble) out << "# " << line << '\n';
  out << "epoch,loss,jaccard\n";
  out.precision(17);
  for (const auto& r : log) out << r.epoch << ',' << r.loss << ',' << r.jaccard << '\n';
}

}  // namespace satinfra::nn
