// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "dcdm/errors.hpp"

namespace dcdm {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Dense row-major n-dimensional array.
template <class S>
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), S(0)) {}
  Tensor(std::initializer_list<std::size_t> shape)
      : Tensor(std::vector<std::size_t>(shape)) {}

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, S v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& raw() { return data_; }
  const std::vector<S>& raw() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  S& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const S& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  S& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const S& at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  S& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const S& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }
  void set_zero() { fill(S(0)); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const S& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  S min() const { return data_.empty() ? S(0) : *std::min_element(data_.begin(), data_.end()); }
  S max() const { return data_.empty() ? S(0) : *std::max_element(data_.begin(), data_.end()); }
  double sum() const {
    double s = 0;
    for (const S& v : data_) s += static_cast<double>(v);
    return s;
  }

  Tensor& operator+=(const Tensor& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(S c) {
    for (S& v : data_) v *= c;
    return *this;
  }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
    return out;
  }

  /// View the flattened contents as an Eigen column vector.
  Eigen::Map<Vec<S>> vec() { return Eigen::Map<Vec<S>>(data_.data(), data_.size()); }
  Eigen::Map<const Vec<S>> vec() const {
    return Eigen::Map<const Vec<S>>(data_.data(), data_.size());
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

private:
  std::vector<std::size_t> shape_;
  std::vector<S> data_;
};

template <class S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace dcdm
