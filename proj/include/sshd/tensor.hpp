#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "sshd/errors.hpp"

namespace sshd {

// Extents, outermost first. Feature maps use the canonical row-major
// B x C x H x W layout; lower (and higher, for kernel stacks) ranks occur.
using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool shapes_equal(const Shape& a, const Shape& b);

// Dense row-major tensor. Plain value type: copies are deep.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
      throw ConfigError("tensor data size " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }
  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t extent(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  template <typename... Ix>
  T& at(Ix... ix) { return data_[static_cast<size_t>(offset_of(ix...))]; }
  template <typename... Ix>
  const T& at(Ix... ix) const { return data_[static_cast<size_t>(offset_of(ix...))]; }

  void fill(T value) { for (auto& v : data_) v = value; }
  void zero() { fill(T(0)); }

  bool all_finite() const {
    for (const T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  static int64_t checked_numel(const Shape& s) {
    for (int64_t e : s)
      if (e <= 0) throw ConfigError("non-positive extent in shape " + shape_str(s));
    return shape_numel(s);
  }

  template <typename... Ix>
  int64_t offset_of(Ix... ix) const {
    const int64_t idx[] = {static_cast<int64_t>(ix)...};
    const size_t n = sizeof...(Ix);
    int64_t off = 0;
    for (size_t a = 0; a < n; ++a) off = off * shape_[a] + idx[a];
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace sshd
