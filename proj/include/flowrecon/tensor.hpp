#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flowrecon/error.hpp"

namespace flowrecon {

/// Extents of a planar multi-channel array. Data is stored channel-major,
/// then row-major within a channel: index = (c * height + y) * width + x.
struct Shape {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(shape), data_(shape.size(), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + to_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::span<T> channel(std::size_t c) { return std::span<T>(data_).subspan(c * shape_.plane(), shape_.plane()); }
  std::span<const T> channel(std::size_t c) const {
    return std::span<const T>(data_).subspan(c * shape_.plane(), shape_.plane());
  }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using ComplexTensor = BasicTensor<std::complex<double>>;

void require_same_shape(const Shape& a, const Shape& b, const char* what);
void require_finite(std::span<const double> v, const std::string& where);

double dot(std::span<const double> a, std::span<const double> b);
double dot(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b);  // Re <a, b>
double norm2(std::span<const double> a);
double norm2(std::span<const std::complex<double>> a);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

}  // namespace flowrecon
