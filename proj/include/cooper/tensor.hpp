#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cooper {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Raised when an op receives operands of incompatible shapes. The message
/// names the op and both shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b);
  ShapeError(const std::string& op, const std::string& detail);
};

/// Dense row-major tensor of doubles. Rank is 0, 1 or 2 in practice; every
/// op that cares treats the tensor as rows() x cols().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
  }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<const double> row(std::size_t r) const { return values().subspan(r * cols(), cols()); }
  std::span<double> row(std::size_t r) { return values().subspan(r * cols(), cols()); }

  bool all_finite() const;
  bool operator==(const Tensor& o) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const Shape& s);

}  // namespace cooper
