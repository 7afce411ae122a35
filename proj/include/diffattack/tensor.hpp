#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffattack/error.hpp"

namespace diffattack {

inline constexpr double kPixelMin = 0.0;
inline constexpr double kPixelMax = 255.0;

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw ShapeError("shape must have at least one dimension");
    for (std::size_t d : dims_) {
      if (d == 0) throw ShapeError("shape " + to_string() + " has a zero extent");
    }
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }

  std::size_t element_count() const noexcept {
    if (dims_.empty()) return 0;
    return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
  }

  std::string to_string() const {
    std::string out = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(dims_[i]);
    }
    return out + "]";
  }

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

// Immutable array of pixel intensities in the raw [0, 255] domain.
class InputTensor {
 public:
  InputTensor() = default;

  InputTensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.element_count()) {
      throw ShapeError("tensor of shape " + shape_.to_string() + " needs " +
                       std::to_string(shape_.element_count()) + " values, got " +
                       std::to_string(values_.size()));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) check_pixel(values_[i], i);
  }

  static InputTensor zeros(Shape shape) {
    const std::size_t n = shape.element_count();
    return InputTensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double operator[](std::size_t i) const { return values_.at(i); }

  // Copy of this tensor with one element replaced.
  InputTensor with_pixel(std::size_t flat_index, double value) const {
    if (flat_index >= values_.size()) {
      throw ValueError("pixel index " + std::to_string(flat_index) + " out of range for " +
                       std::to_string(values_.size()) + " elements");
    }
    check_pixel(value, flat_index);
    InputTensor out = *this;
    out.values_[flat_index] = value;
    return out;
  }

  friend bool operator==(const InputTensor&, const InputTensor&) = default;

 private:
  static void check_pixel(double v, std::size_t i) {
    if (!(v >= kPixelMin && v <= kPixelMax)) {
      throw ValueError("pixel value " + std::to_string(v) + " at index " + std::to_string(i) +
                       " outside [0, 255]");
    }
  }

  Shape shape_;
  std::vector<double> values_;
};

inline InputTensor set_pixel(const InputTensor& x, std::size_t flat_index, double value) {
  return x.with_pixel(flat_index, value);
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("length mismatch: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum;
}

namespace detail {
inline void require_same_shape(const InputTensor& a, const InputTensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("shape mismatch: " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
  }
}
}  // namespace detail

inline double l1_distance(const InputTensor& a, const InputTensor& b) {
  detail::require_same_shape(a, b);
  return l1_distance(a.values(), b.values());
}

inline double l2_distance(const InputTensor& a, const InputTensor& b) {
  detail::require_same_shape(a, b);
  double sum = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace diffattack
