#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace wproj {

/// Dense row-major array of up to four dimensions, stored in double precision.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(double v);
  bool all_finite() const noexcept;

  /// Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const Tensor::Shape& shape);
std::string shape_string(const Tensor::Shape& shape);

/// Rows [begin, end) along the leading axis.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);

/// Rows selected by index along the leading axis, in the given order.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows);

}  // namespace wproj
