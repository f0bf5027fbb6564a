#include "iqbench/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

#include "iqbench/error.hpp"

namespace iqbench {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, bool rg)
    : shape(std::move(s)), data(shape_numel(shape), 0.0), requires_grad(rg) {
  for (auto d : shape) {
    require(d > 0, ErrorCode::kShapeMismatch,
            "tensor dimensions must be positive, got " + shape_str(shape));
  }
}

Tensor::Tensor(Shape s, std::vector<double> values, bool rg)
    : shape(std::move(s)), data(std::move(values)), requires_grad(rg) {
  for (auto d : shape) {
    require(d > 0, ErrorCode::kShapeMismatch,
            "tensor dimensions must be positive, got " + shape_str(shape));
  }
  require(data.size() == shape_numel(shape), ErrorCode::kShapeMismatch,
          "tensor data length " + std::to_string(data.size()) +
              " does not match shape " + shape_str(shape));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < shape.size(), ErrorCode::kShapeMismatch,
          "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  return shape[axis];
}

double Tensor::item() const {
  require(data.size() == 1, ErrorCode::kShapeMismatch,
          "item() on non-scalar tensor " + shape_str(shape));
  return data[0];
}

void Tensor::zero_grad() {
  if (requires_grad || !grad.empty()) grad.assign(data.size(), 0.0);
}

}  // namespace iqbench
