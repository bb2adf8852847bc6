#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ctrfusion {

// Dense row-major fp64 array with an optional gradient buffer of equal length.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  // First dimension, and the product of the remaining ones (1 for vectors).
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  bool has_grad() const { return grad_.has_value(); }
  std::span<double> grad();
  std::span<const double> grad() const;
  void ensure_grad();
  void zero_grad();
  void drop_grad() { grad_.reset(); }

  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
  std::optional<std::vector<double>> grad_;
};

}  // namespace ctrfusion
