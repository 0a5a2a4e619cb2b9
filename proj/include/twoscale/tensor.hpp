#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "twoscale/error.hpp"

namespace twoscale {

inline std::size_t shape_count(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

inline std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense row-major value container with an explicit shape. Do not confuse with
// a linear-algebra tensor: this is storage plus shape bookkeeping, nothing
// more. The checked constructor validates once so hot paths can index freely.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape_)
      : shape(std::move(shape_)), values(checked_count(shape), 0.0) {}

  Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
      : shape(std::move(shape_)), values(std::move(values_)) {
    if (values.size() != checked_count(shape)) {
      throw InvalidInput("Tensor: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_string(shape));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw InvalidInput("Tensor: non-finite value at index " + std::to_string(i));
      }
    }
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }

 private:
  static std::size_t checked_count(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw InvalidInput("Tensor: empty shape");
    for (std::size_t d : shape) {
      if (d == 0) throw InvalidInput("Tensor: zero-length dimension in shape " + shape_string(shape));
    }
    return shape_count(shape);
  }
};

}  // namespace twoscale
