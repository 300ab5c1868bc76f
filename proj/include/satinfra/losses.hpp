#pragma once

// Segmentation losses and overlap metrics.
//
// bce      -(1/N) sum y log p + (1-y) log(1-p), p clamped to [eps, 1-eps]
// dice     2 sum(a*b) / (sum a^2 + sum b^2), 1 when both inputs are all-zero
// hybrid   w_bce * bce + w_dice * (1 - dice)
// jaccard  |A n B| / (|A| + |B| - |A n B|), 1 when both masks are empty

#include <cstdint>
#include <span>
#include <stdexcept>

#include "satinfra/tensor.hpp"

namespace satinfra::metrics {

inline constexpr double kProbEpsilon = 1e-7;

struct HybridWeights {
  double bce = 1.0;
  double dice = 1.0;
};

struct LossAndGrad {
  double loss = 0.0;
  nn::Tensor grad;  // d loss / d pred, same shape as pred
};

double bce(std::span<const double> pred, std::span<const double> target);
double dice(std::span<const double> a, std::span<const double> b);
double hybrid_loss(std::span<const double> pred, std::span<const double> target,
                   HybridWeights weights = {});

double bce(const nn::Tensor& pred, const nn::Tensor& target);
double dice(const nn::Tensor& a, const nn::Tensor& b);
double hybrid_loss(const nn::Tensor& pred, const nn::Tensor& target, HybridWeights weights = {});

LossAndGrad hybrid_loss_with_grad(const nn::Tensor& pred, const nn::Tensor& target,
                                  HybridWeights weights = {});

// Masks are 0/1 bytes; any nonzero byte counts as set.
double jaccard(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
double binary_dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct Overlap {
  std::uint64_t intersection = 0;
  std::uint64_t a_count = 0;
  std::uint64_t b_count = 0;

  Overlap& operator+=(const Overlap& o) {
    intersection += o.intersection;
    a_count += o.a_count;
    b_count += o.b_count;
    return *this;
  }
  double jaccard() const;
};

// Overlap counts of pred > threshold against target > 0.5.
Overlap overlap_thresholded(std::span<const double> pred, std::span<const double> target,
                            double threshold = 0.5);

}  // namespace satinfra::metrics
