#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promobench/common.hpp"

namespace promobench::num {

std::string shape_str(const std::vector<int64_t>& shape);

// Dense row-major array of 64-bit reals with shape metadata.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape) { resize(std::move(shape)); }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor from(std::vector<int64_t> shape, std::vector<double> values);

  int64_t size() const { return static_cast<int64_t>(v_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int64_t>& shape() const { return shape_; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  double& at(int64_t r, int64_t c) { return v_[static_cast<size_t>(r * dim(1) + c)]; }
  double at(int64_t r, int64_t c) const { return v_[static_cast<size_t>(r * dim(1) + c)]; }

  void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

  // Reshapes, reusing capacity; contents are unspecified afterwards.
  void resize(std::vector<int64_t> shape);

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_string() const { return shape_str(shape_); }

 private:
  std::vector<int64_t> shape_;
  std::vector<double> v_;
};

}  // namespace promobench::num
