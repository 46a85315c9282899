#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "histonorm/error.hpp"

namespace histonorm {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ')';
  return os.str();
}

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    if (!std::isfinite(fill)) throw NumericError("tensor fill value is not finite");
  }
  Tensor(Shape shape, const std::vector<double>& values) : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (shape_size(shape_) != data_.size())
      throw DimensionError("tensor shape " + to_string(shape_) + " does not match " +
                           std::to_string(data_.size()) + " values");
    for (double v : data_)
      if (!std::isfinite(v)) throw NumericError("tensor value is not finite");
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  template <class... Idx>
  double& operator()(Idx... idx) {
    return data_[offset(idx...)];
  }
  template <class... Idx>
  double operator()(Idx... idx) const {
    return data_[offset(idx...)];
  }

  // Row `i` of the leading axis.
  std::span<const double> row(std::size_t i) const {
    const std::size_t stride = size() / shape_.at(0);
    return std::span<const double>(data_).subspan(i * stride, stride);
  }
  std::span<double> row(std::size_t i) {
    const std::size_t stride = size() / shape_.at(0);
    return std::span<double>(data_).subspan(i * stride, stride);
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  template <class... Idx>
  std::size_t offset(Idx... idx) const {
    const std::size_t ids[] = {static_cast<std::size_t>(idx)...};
    std::size_t off = 0;
    for (std::size_t a = 0; a < sizeof...(Idx); ++a) off = off * shape_[a] + ids[a];
    return off;
  }

  Shape shape_;
  // Fixed alignment keeps Eigen's vectorised loops, and so floating-point
  // summation order, independent of where the allocator puts the buffer.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

// View a rank-2 tensor as a row-major matrix.
inline MatrixView as_matrix(Tensor& t) {
  if (t.rank() != 2) throw DimensionError("expected a rank-2 tensor, got " + to_string(t.shape()));
  return MatrixView(t.data(), static_cast<Eigen::Index>(t.extent(0)),
                    static_cast<Eigen::Index>(t.extent(1)));
}
inline ConstMatrixView as_matrix(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("expected a rank-2 tensor, got " + to_string(t.shape()));
  return ConstMatrixView(t.data(), static_cast<Eigen::Index>(t.extent(0)),
                         static_cast<Eigen::Index>(t.extent(1)));
}

inline void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected)
    throw DimensionError(std::string(what) + ": expected shape " + to_string(expected) + ", got " +
                         to_string(t.shape()));
}

inline void add_into(Tensor& acc, const Tensor& other) {
  require_shape(other, acc.shape(), "add_into");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += other[i];
}

}  // namespace histonorm
