/* Copyright 2026 The lungsev Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lungsev/error.hpp"

namespace lungsev::toynet {

/// (batch, channels, Z, Y, X), row-major.
struct Shape5 {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t z = 1;
  std::int64_t y = 1;
  std::int64_t x = 1;

  [[nodiscard]] std::int64_t count() const { return n * c * z * y * x; }
  [[nodiscard]] std::int64_t spatial() const { return z * y * x; }
  [[nodiscard]] std::array<std::int64_t, 5> as_array() const { return {n, c, z, y, x}; }
  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << z << "," << y << "," << x << ")";
    return os.str();
  }
  friend bool operator==(const Shape5&, const Shape5&) = default;
};

class Tensor5 {
 public:
  Tensor5() = default;
  explicit Tensor5(Shape5 shape, double fill = 0.0) : shape_(shape) {
    if (shape.n < 1 || shape.c < 1 || shape.z < 1 || shape.y < 1 || shape.x < 1) {
      throw InputError("tensor shape must be positive, got " + shape.str());
    }
    data_.assign(static_cast<std::size_t>(shape.count()), fill);
  }
  Tensor5(Shape5 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.count()) {
      throw InputError("tensor data length " + std::to_string(data_.size()) + " does not match " + shape_.str());
    }
  }

  [[nodiscard]] const Shape5& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  [[nodiscard]] const double* ptr() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::size_t index(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y,
                                  std::int64_t x) const {
    return static_cast<std::size_t>((((n * shape_.c + c) * shape_.z + z) * shape_.y + y) * shape_.x + x);
  }
  double& at(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) {
    return data_[index(n, c, z, y, x)];
  }
  [[nodiscard]] const double& at(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) const {
    return data_[index(n, c, z, y, x)];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor5& operator+=(const Tensor5& o) {
    if (!(o.shape_ == shape_)) throw InputError("tensor add shape mismatch " + shape_.str() + " vs " + o.shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  Shape5 shape_{};
  std::vector<double> data_ = std::vector<double>(1, 0.0);
};

inline double dot(const Tensor5& a, const Tensor5& b) {
  if (!(a.shape() == b.shape())) throw InputError("dot shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

#ifndef NDEBUG
inline void debug_check_finite(const Tensor5& t, const char* where) {
  if (!t.all_finite()) throw InvariantError(std::string("non-finite value in ") + where);
}
#else
inline void debug_check_finite(const Tensor5&, const char*) {}
#endif

}  // namespace lungsev::toynet
