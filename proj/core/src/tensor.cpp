#include "wproj/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "wproj/error.hpp"

namespace wproj {

std::size_t shape_product(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Tensor::Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.size() > 4) throw ConfigError("tensor rank above 4: " + shape_string(shape_));
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_.size() > 4) throw ConfigError("tensor rank above 4: " + shape_string(shape_));
  if (shape_product(shape_) != data_.size()) {
    throw ConfigError("tensor shape " + shape_string(shape_) + " does not match " +
                      std::to_string(data_.size()) + " values");
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out;
  if (shape_product(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin > end || end > t.dim(0)) {
    throw ConfigError("row slice out of range for " + shape_string(t.shape()));
  }
  Tensor::Shape shape = t.shape();
  shape[0] = end - begin;
  const std::size_t stride = t.dim(0) ? t.size() / t.dim(0) : 0;
  std::vector<double> values(t.data() + begin * stride, t.data() + end * stride);
  return Tensor(std::move(shape), std::move(values));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (t.rank() == 0) throw ConfigError("cannot gather rows of a scalar tensor");
  Tensor::Shape shape = t.shape();
  shape[0] = rows.size();
  const std::size_t stride = t.dim(0) ? t.size() / t.dim(0) : 0;
  std::vector<double> values;
  values.reserve(rows.size() * stride);
  for (std::size_t r : rows) {
    if (r >= t.dim(0)) throw ConfigError("row index out of range");
    values.insert(values.end(), t.data() + r * stride, t.data() + (r + 1) * stride);
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace wproj
