#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "acl/errors.hpp"
#include "acl/rng.hpp"

namespace acl {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d < 0) throw ArgumentError("negative dimension in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

// Dense row-major tensor. Value semantics (copies copy the buffer). The
// default constructor-from-shape zero-fills; uninit() skips the fill for
// buffers that are fully overwritten right away.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), size_(shape_numel(shape_)) {
    data_ = std::make_unique<T[]>(static_cast<std::size_t>(size_));  // value-initialised (zero)
  }

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), size_(shape_numel(shape_)) {
    if (static_cast<std::int64_t>(values.size()) != size_)
      throw ArgumentError("tensor data size does not match shape " + shape_str(shape_));
    data_ = std::make_unique_for_overwrite<T[]>(static_cast<std::size_t>(size_));
    std::copy(values.begin(), values.end(), data_.get());
  }

  Tensor(const Tensor& o) : shape_(o.shape_), size_(o.size_) {
    if (o.data_) {
      data_ = std::make_unique_for_overwrite<T[]>(static_cast<std::size_t>(size_));
      std::memcpy(data_.get(), o.data_.get(), static_cast<std::size_t>(size_) * sizeof(T));
    }
  }
  Tensor& operator=(const Tensor& o) {
    if (this != &o) *this = Tensor(o);
    return *this;
  }
  Tensor(Tensor&&) noexcept = default;
  Tensor& operator=(Tensor&&) noexcept = default;

  static Tensor uninit(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.size_ = shape_numel(t.shape_);
    t.data_ = std::make_unique_for_overwrite<T[]>(static_cast<std::size_t>(t.size_));
    return t;
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor full(Shape s, T v) {
    Tensor t = uninit(std::move(s));
    t.fill(v);
    return t;
  }

  static Tensor randn(Shape s, Rng& rng, double stddev = 1.0) {
    Tensor t = uninit(std::move(s));
    for (std::int64_t i = 0; i < t.size_; ++i) t.data_[i] = static_cast<T>(stddev * rng.normal());
    return t;
  }

  static Tensor uniform(Shape s, Rng& rng, double lo, double hi) {
    Tensor t = uninit(std::move(s));
    for (std::int64_t i = 0; i < t.size_; ++i) t.data_[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return size_; }
  bool empty() const { return size_ == 0 || !data_; }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != size_)
      throw ArgumentError("reshape " + shape_str(shape_) + " -> " + shape_str(s) + ": element count differs");
    Tensor t = *this;
    t.shape_ = std::move(s);
    return t;
  }

  void reshape_inplace(Shape s) {
    if (shape_numel(s) != size_) throw ArgumentError("reshape: element count differs");
    shape_ = std::move(s);
  }

  void fill(T v) {
    for (std::int64_t i = 0; i < size_; ++i) data_[static_cast<std::size_t>(i)] = v;
  }

  bool all_finite() const {
    for (std::int64_t i = 0; i < size_; ++i)
      if (!std::isfinite(static_cast<double>(data_[static_cast<std::size_t>(i)]))) return false;
    return true;
  }

  std::int64_t idx4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out = Tensor<U>::uninit(shape_);
    for (std::int64_t i = 0; i < size_; ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  std::int64_t size_ = 0;
  std::unique_ptr<T[]> data_;
};

}  // namespace acl
