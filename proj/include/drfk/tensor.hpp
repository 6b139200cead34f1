#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "drfk/common.hpp"
#include "drfk/rng.hpp"

namespace drfk {

// (batch, channels, rows, cols), row-major within (h, w), channel-major
// within a batch element.
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t numel() const {
    return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
  }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return detail::cat('(', n, ',', c, ',', h, ',', w, ')');
  }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape s) : shape_(s), data_(s.numel(), T(0)) {
    require(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1,
            "Tensor: shape components must be >= 1, got ", s.str());
  }
  Tensor(int n, int c, int h, int w) : Tensor(Shape{n, c, h, w}) {}

  static Tensor full(Shape s, T v) {
    Tensor t(s);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor ones(Shape s) { return full(s, T(1)); }

  static Tensor scalar(T v) {
    Tensor t(1, 1, 1, 1);
    t.data_[0] = v;
    return t;
  }

  // Uniform in [-bound, bound]
  static Tensor uniform(Shape s, T bound, Rng& rng) {
    Tensor t(s);
    for (auto& v : t.data_) v = T(rng.uniform(-double(bound), double(bound)));
    return t;
  }

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int in, int ic, int ih, int iw) const {
    return ((std::size_t(in) * shape_.c + ic) * shape_.h + ih) * shape_.w + iw;
  }
  T& at(int in, int ic, int ih, int iw) { return data_[index(in, ic, ih, iw)]; }
  const T& at(int in, int ic, int ih, int iw) const {
    return data_[index(in, ic, ih, iw)];
  }

  // pointer to the start of row ih of plane (in, ic)
  T* row(int in, int ic, int ih) { return data() + index(in, ic, ih, 0); }
  const T* row(int in, int ic, int ih) const {
    return data() + index(in, ic, ih, 0);
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = U(data_[i]);
    return out;
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
T max_abs(const Tensor<T>& t) {
  T m = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "max_abs_diff: shape mismatch ",
          a.shape().str(), " vs ", b.shape().str());
  T m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class T>
T sum_all(const Tensor<T>& t) {
  T s = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t[i];
  return s;
}

template <class T>
T dot_all(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "dot_all: shape mismatch ", a.shape().str(),
          " vs ", b.shape().str());
  T s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

template <class T, class F>
Tensor<T> map(const Tensor<T>& t, F f) {
  Tensor<T> out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = f(t[i]);
  return out;
}

template <class T, class F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
  require(a.shape() == b.shape(), "zip: shape mismatch ", a.shape().str(),
          " vs ", b.shape().str());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  require(dst.shape() == src.shape(), "accumulate: shape mismatch ",
          dst.shape().str(), " vs ", src.shape().str());
  for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

template <class T>
Tensor<T> clip01(const Tensor<T>& t) {
  return map(t, [](T v) { return std::clamp(v, T(0), T(1)); });
}

}  // namespace drfk
