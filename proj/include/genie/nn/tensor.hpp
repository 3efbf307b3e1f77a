#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "genie/error.hpp"

namespace genie::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major array with an optional gradient buffer of the same size.
// Rank-2 views treat dim 0 as rows and the product of the rest as columns.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), values_(checked_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    require(values_.size() == checked_size(shape_),
            "tensor: value count does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const { return rows() == 0 ? 0 : size() / rows(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  T& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  bool has_grad() const { return !grad_.empty(); }
  void ensure_grad() {
    if (grad_.size() != values_.size()) grad_.assign(values_.size(), T{0});
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T{0}); }
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }
  std::span<T> grad() { return grad_; }
  std::span<const T> grad() const { return grad_; }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
  }

 private:
  static std::size_t checked_size(const Shape& shape) {
    for (auto d : shape) require(d > 0, "tensor: dimensions must be positive");
    return shape_size(shape);
  }

  Shape shape_;
  std::vector<T> values_;
  std::vector<T> grad_;
};

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T>* tensor;
};

}  // namespace genie::nn
