#pragma once
// Dense row-major tensor over float (runtime mode) or double (oracle mode).
// Values are immutable by convention once an op has produced them; ops hand
// out fresh tensors and never alias inputs.

#include "errors.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace sndcnn {

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), S(0));
  }

  Tensor(std::vector<int> shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size())
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not fill shape " + shape_str(shape_));
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& vec() { return data_; }
  const std::vector<S>& vec() const { return data_; }

  template <class... I>
  S& at(I... idx) {
    return data_[offset(idx...)];
  }
  template <class... I>
  const S& at(I... idx) const {
    return data_[offset(idx...)];
  }

  // reinterpret the extents; element count must be preserved
  void reshape(std::vector<int> shape) {
    if (checked_size(shape) != data_.size())
      throw DimensionError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                           " changes element count");
    shape_ = std::move(shape);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  template <class... I>
  std::size_t offset(I... idx) const {
    const int is[] = {static_cast<int>(idx)...};
    if (sizeof...(idx) != shape_.size())
      throw DimensionError("index rank " + std::to_string(sizeof...(idx)) +
                           " vs tensor " + shape_str(shape_));
    std::size_t off = 0;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (is[i] < 0 || is[i] >= shape_[i])
        throw IndexError("index " + std::to_string(is[i]) + " out of bounds for dim " +
                         std::to_string(i) + " of " + shape_str(shape_));
      off = off * static_cast<std::size_t>(shape_[i]) + static_cast<std::size_t>(is[i]);
    }
    return off;
  }

 private:
  static std::size_t checked_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
      if (e < 1) throw DimensionError("tensor extents must be >= 1, got " + shape_str(shape));
      n *= static_cast<std::size_t>(e);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<S> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

} // namespace sndcnn
