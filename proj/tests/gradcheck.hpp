#pragma once

// Central finite differences for gradient tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "satinfra/tensor.hpp"

namespace satinfra::testing {

inline constexpr double kFdStep = 1e-4;

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / scale;
}

// d f / d values[i] by central differences; `values` is restored afterwards.
inline double central_difference(std::span<double> values, std::size_t i,
                                  const std::function<double()>& f, double h = kFdStep) {
  const double saved = values[i];
  values[i] = saved + h;
  const double up = f();
  values[i] = saved - h;
  const double down = f();
  values[i] = saved;
  return (up - down) / (2.0 * h);
}

inline void fill_uniform(nn::Tensor& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
}

inline double dot(const nn::Tensor& a, const nn::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace satinfra::testing
