#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace camaudit {

/// Dense row-major array of doubles with rank 1 to 4.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::initializer_list<std::size_t> shape) { return Tensor(std::vector<std::size_t>(shape)); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-2 and rank-3 element access. No bounds checks.
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t c, std::size_t i, std::size_t j) { return data_[(c * shape_[1] + i) * shape_[2] + j]; }
  double at(std::size_t c, std::size_t i, std::size_t j) const { return data_[(c * shape_[1] + i) * shape_[2] + j]; }

  /// Pointer to the start of row i of channel c of a rank-3 tensor.
  double* row(std::size_t c, std::size_t i) { return data_.data() + (c * shape_[1] + i) * shape_[2]; }
  const double* row(std::size_t c, std::size_t i) const { return data_.data() + (c * shape_[1] + i) * shape_[2]; }

  /// Contiguous view of one leading-axis slice (a channel of a C×H×W map).
  std::span<double> slice(std::size_t c);
  std::span<const double> slice(std::size_t c) const;

  /// Same data, new shape with equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  bool all_finite() const;
  double sum() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace camaudit
