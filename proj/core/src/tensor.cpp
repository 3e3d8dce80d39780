#include "camaudit/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "camaudit/errors.hpp"

namespace camaudit {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  if (shape_.empty() || shape_.size() > 4) throw DimensionError("tensor rank must be 1..4, got " + std::to_string(shape_.size()));
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 4) throw DimensionError("tensor rank must be 1..4, got " + std::to_string(shape_.size()));
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) + " values");
  }
}

std::span<double> Tensor::slice(std::size_t c) {
  const std::size_t stride = data_.size() / shape_[0];
  return std::span<double>(data_).subspan(c * stride, stride);
}

std::span<const double> Tensor::slice(std::size_t c) const {
  const std::size_t stride = data_.size() / shape_[0];
  return std::span<const double>(data_).subspan(c * stride, stride);
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

}  // namespace camaudit
