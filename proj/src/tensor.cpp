#include "a2k/tensor.hpp"

#include <cmath>
#include <string>

#include "a2k/errors.hpp"

namespace a2k {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  std::int64_t n = 1;
  for (int d : shape_) {
    if (d <= 0) throw ValidationError("tensor dimensions must be positive");
    n *= d;
  }
  data_.assign(static_cast<std::size_t>(n), 0.0);
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t[0] = v;
  return t;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

}  // namespace a2k
