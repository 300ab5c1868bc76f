#include "satinfra/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace satinfra::metrics {

namespace {

void require_equal_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw nn::ShapeError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

void require_binary(std::span<const double> target) {
  for (double y : target) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce: target values must be 0 or 1");
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

struct DiceTerms {
  double cross = 0.0;  // sum a*b
  double norm = 0.0;   // sum a^2 + sum b^2
};

DiceTerms dice_terms(std::span<const double> a, std::span<const double> b) {
  DiceTerms t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    t.cross += a[i] * b[i];
    t.norm += a[i] * a[i] + b[i] * b[i];
  }
  return t;
}

}  // namespace

double bce(std::span<const double> pred, std::span<const double> target) {
  require_equal_length(pred.size(), target.size(), "bce");
  require_binary(target);
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = clamp_prob(pred[i]);
    sum += target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(pred.size());
}

double dice(std::span<const double> a, std::span<const double> b) {
  require_equal_length(a.size(), b.size(), "dice");
  const DiceTerms t = dice_terms(a, b);
  if (t.norm == 0.0) return 1.0;
  return 2.0 * t.cross / t.norm;
}

double hybrid_loss(std::span<const double> pred, std::span<const double> target,
                   HybridWeights weights) {
  return weights.bce * bce(pred, target) + weights.dice * (1.0 - dice(pred, target));
}

double bce(const nn::Tensor& pred, const nn::Tensor& target) {
  nn::require_same_shape(pred, target, "bce");
  return bce(pred.data(), target.data());
}

double dice(const nn::Tensor& a, const nn::Tensor& b) {
  nn::require_same_shape(a, b, "dice");
  return dice(a.data(), b.data());
}

double hybrid_loss(const nn::Tensor& pred, const nn::Tensor& target, HybridWeights weights) {
  nn::require_same_shape(pred, target, "hybrid_loss");
  return hybrid_loss(pred.data(), target.data(), weights);
}

LossAndGrad hybrid_loss_with_grad(const nn::Tensor& pred, const nn::Tensor& target,
                                  HybridWeights weights) {
  nn::require_same_shape(pred, target, "hybrid_loss");
  LossAndGrad out{hybrid_loss(pred, target, weights), nn::Tensor(pred.shape())};
  const std::size_t n = pred.size();
  if (n == 0) return out;

  const DiceTerms t = dice_terms(pred.data(), target.data());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = pred[i], y = target[i];
    double g = 0.0;
    // The clamp is flat outside [eps, 1-eps].
    if (p > kProbEpsilon && p < 1.0 - kProbEpsilon) g = -inv_n * (y / p - (1.0 - y) / (1.0 - p));
    g *= weights.bce;
    if (t.norm > 0.0) {
      const double d_dice = 2.0 * y / t.norm - 4.0 * t.cross * p / (t.norm * t.norm);
      g -= weights.dice * d_dice;
    }
    out.grad[i] = g;
  }
  return out;
}

double Overlap::jaccard() const {
  const std::uint64_t uni = a_count + b_count - intersection;
  if (uni == 0) return 1.0;
  return static_cast<double>(intersection) / static_cast<double>(uni);
}

double jaccard(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  require_equal_length(a.size(), b.size(), "jaccard");
  Overlap o;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    o.a_count += x;
    o.b_count += y;
    o.intersection += x && y;
  }
  return o.jaccard();
}

double binary_dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  require_equal_length(a.size(), b.size(), "binary_dice");
  std::uint64_t inter = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += x && y;
    total += static_cast<std::uint64_t>(x) + static_cast<std::uint64_t>(y);
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

Overlap overlap_thresholded(std::span<const double> pred, std::span<const double> target,
                            double threshold) {
  require_equal_length(pred.size(), target.size(), "overlap");
  Overlap o;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool x = pred[i] > threshold, y = target[i] > 0.5;
    o.a_count += x;
    o.b_count += y;
    o.intersection += x && y;
  }
  return o;
}

}  // namespace satinfra::metrics
