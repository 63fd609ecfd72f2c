#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major array with channels innermost. Up to five axes are used
/// by the model (depth, height, width, channels, plus an optional batch).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    validate_extents();
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_extents();
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size())
      throw ShapeError("index rank " + std::to_string(index.size()) +
                       " does not match tensor rank " + std::to_string(rank()));
    std::size_t off = 0;
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= shape_[i])
        throw std::out_of_range("index " + std::to_string(index[i]) + " out of range on axis " +
                                std::to_string(i) + " of " + shape_str(shape_));
      off = off * shape_[i] + index[i];
    }
    return off;
  }

  /// Inverse of offset(): mixed-radix decomposition of a linear index.
  Shape unravel(std::size_t linear) const {
    Shape index(shape_.size());
    for (std::size_t i = shape_.size(); i-- > 0;) {
      index[i] = linear % shape_[i];
      linear /= shape_[i];
    }
    return index;
  }

  template <typename... I>
  T& at(I... idx) {
    const std::size_t index[] = {static_cast<std::size_t>(idx)...};
    return data_[offset(index)];
  }
  template <typename... I>
  const T& at(I... idx) const {
    const std::size_t index[] = {static_cast<std::size_t>(idx)...};
    return data_[offset(index)];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  void validate_extents() const {
    for (std::size_t e : shape_)
      if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace gcnet
