#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace iqbench {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// `grad` is empty until something writes a gradient into it; once present
/// it always has the same length as `data`.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(Shape s, bool requires_grad = false);
  Tensor(Shape s, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const;
  bool has_grad() const { return !grad.empty(); }

  double item() const;

  // Resets grad to zeros (allocating it when requires_grad is set).
  void zero_grad();
};

}  // namespace iqbench
