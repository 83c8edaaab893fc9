#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "ockd/common.hpp"

namespace ockd {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s)
      : shape(std::move(s)), v(numel_of(shape), T(0)) {}
  Tensor(std::initializer_list<int> s) : Tensor(std::vector<int>(s)) {}

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  int dim(std::size_t i) const { return shape.at(i); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T& operator[](std::int64_t i) { return v[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return v[static_cast<std::size_t>(i)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  bool all_finite() const {
    for (const T& x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < v.size(); ++i)
      out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

// Activation tensor in channel-major layout: value(ch, sample, y, x) lives at
// v[ch * (n*h*w) + sample * (h*w) + y * w + x]. Keeping the channel outermost
// makes conv a single GEMM over the whole batch and batch-norm a row-wise
// reduction.
template <typename T>
struct Act {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Act() = default;
  Act(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

  std::int64_t cols() const { return static_cast<std::int64_t>(n) * h * w; }
  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  T* row(int ch) { return v.data() + static_cast<std::int64_t>(ch) * cols(); }
  const T* row(int ch) const {
    return v.data() + static_cast<std::int64_t>(ch) * cols();
  }
  T& at(int ch, int sample, int y, int x) {
    return v[(static_cast<std::int64_t>(ch) * n + sample) * h * w + y * w + x];
  }
  const T& at(int ch, int sample, int y, int x) const {
    return v[(static_cast<std::int64_t>(ch) * n + sample) * h * w + y * w + x];
  }
  void fill(T x) { std::fill(v.begin(), v.end(), x); }
};

}  // namespace ockd
