#include "promobench/tensor.hpp"

#include <sstream>

namespace promobench::num {

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> values) {
  Tensor t;
  int64_t expect = 1;
  for (int64_t d : shape) expect *= d;
  if (expect != static_cast<int64_t>(values.size())) {
    throw ShapeError("tensor value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  t.shape_ = std::move(shape);
  t.v_ = std::move(values);
  return t;
}

void Tensor::resize(std::vector<int64_t> shape) {
  int64_t total = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    total *= d;
  }
  shape_ = std::move(shape);
  v_.assign(static_cast<size_t>(total), 0.0);
}

}  // namespace promobench::num
