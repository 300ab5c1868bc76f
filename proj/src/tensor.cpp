#include "satinfra/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace satinfra::nn {

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::sample(std::size_t n) const {
  if (rank() != 4 || n >= shape_[0]) throw ShapeError("sample: index out of range");
  Tensor out({1, shape_[1], shape_[2], shape_[3]});
  const std::size_t stride = out.size();
  std::memcpy(out.raw(), raw() + n * stride, stride * sizeof(double));
  return out;
}

std::string Tensor::shape_string() const {
  std::string s = "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + ")";
}

Tensor stack(std::span<const Tensor* const> samples) {
  if (samples.empty()) throw ShapeError("stack: no samples");
  const auto& first = samples.front()->shape();
  if (first.size() != 4 || first[0] != 1) throw ShapeError("stack: expected (1,C,H,W) samples");
  Tensor out({samples.size(), first[1], first[2], first[3]});
  const std::size_t stride = Tensor::count(first);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->shape() != first) throw ShapeError("stack: inconsistent sample shapes");
    std::memcpy(out.raw() + i * stride, samples[i]->raw(), stride * sizeof(double));
  }
  return out;
}

}  // namespace satinfra::nn
