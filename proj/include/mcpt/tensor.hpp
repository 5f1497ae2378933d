// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "mcpt/common.hpp"

namespace mcpt {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major array. Complex grids are stored as real tensors with a
// trailing extent of 2 (interleaved re/im), matching the container format.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    for (auto e : shape_) require(e >= 1, "tensor extent must be >= 1");
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_numel(shape_), "tensor data size does not match shape");
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  std::size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  Tensor<T> reshaped(Shape s) const {
    require(shape_numel(s) == numel(), "reshape must preserve element count");
    Tensor<T> out;
    out.shape_ = std::move(s);
    out.data_ = data_;
    return out;
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  static Tensor<T> scalar(T v) { return Tensor<T>({1}, std::vector<T>{v}); }
  static Tensor<T> row(std::vector<T> v) {
    Shape s{1, v.size()};
    return Tensor<T>(s, std::move(v));
  }
  static Tensor<T> vec1(std::vector<T> v) {
    Shape s{v.size()};
    return Tensor<T>(s, std::move(v));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape();
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  T m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const T d = std::abs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace mcpt
