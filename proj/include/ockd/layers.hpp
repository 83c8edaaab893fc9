#pragma once

#include <cmath>
#include <vector>

#include "ockd/common.hpp"
#include "ockd/gemm.hpp"
#include "ockd/tensor.hpp"

namespace ockd {

// ---------------------------------------------------------------------------
// im2col / col2im for 3x3 (or any odd-k) same-padded convolution over the
// whole batch at once. cols is (Cin*k*k) x (N*oh*ow), row-major.
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const Act<T>& x, int k, int stride, std::vector<T>& cols, int& oh,
            int& ow) {
  const int pad = k / 2;
  oh = (x.h + 2 * pad - k) / stride + 1;
  ow = (x.w + 2 * pad - k) / stride + 1;
  const std::int64_t ocols = static_cast<std::int64_t>(x.n) * oh * ow;
  cols.assign(static_cast<std::size_t>(x.c) * k * k * ocols, T(0));
  for (int c = 0; c < x.c; ++c) {
    const T* src = x.row(c);
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* dst = cols.data() + ((static_cast<std::int64_t>(c) * k + ki) * k + kj) * ocols;
        for (int s = 0; s < x.n; ++s) {
          const T* samp = src + static_cast<std::int64_t>(s) * x.h * x.w;
          T* drow = dst + static_cast<std::int64_t>(s) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= x.h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kj;
              if (ix < 0 || ix >= x.w) continue;
              drow[oy * ow + ox] = samp[iy * x.w + ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& cols, int cin, int k, int stride, Act<T>& dx,
            int oh, int ow) {
  const int pad = k / 2;
  const std::int64_t ocols = static_cast<std::int64_t>(dx.n) * oh * ow;
  dx.fill(T(0));
  for (int c = 0; c < cin; ++c) {
    T* dst = dx.row(c);
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* src = cols.data() + ((static_cast<std::int64_t>(c) * k + ki) * k + kj) * ocols;
        for (int s = 0; s < dx.n; ++s) {
          T* samp = dst + static_cast<std::int64_t>(s) * dx.h * dx.w;
          const T* srow = src + static_cast<std::int64_t>(s) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= dx.h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kj;
              if (ix < 0 || ix >= dx.w) continue;
              samp[iy * dx.w + ix] += srow[oy * ow + ox];
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
struct ConvCache {
  std::vector<T> cols;  // (Cin*k*k) x (N*oh*ow)
  int cin = 0, k = 0, stride = 0;
  int in_h = 0, in_w = 0, oh = 0, ow = 0, n = 0;
};

template <typename T>
Act<T> conv_forward(const Act<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                    int stride, ConvCache<T>& cache) {
  const int cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
  require(cin == x.c, "conv: input channel mismatch");
  cache.cin = cin;
  cache.k = k;
  cache.stride = stride;
  cache.in_h = x.h;
  cache.in_w = x.w;
  cache.n = x.n;
  im2col(x, k, stride, cache.cols, cache.oh, cache.ow);
  Act<T> y(x.n, cout, cache.oh, cache.ow);
  const int kk = cin * k * k;
  const std::int64_t ocols = y.cols();
  gemm(false, false, cout, static_cast<int>(ocols), kk, T(1), w.data(), kk,
       cache.cols.data(), static_cast<int>(ocols), T(0), y.v.data(),
       static_cast<int>(ocols));
  for (int c = 0; c < cout; ++c) {
    T* row = y.row(c);
    const T bc = b[c];
    for (std::int64_t i = 0; i < ocols; ++i) row[i] += bc;
  }
  return y;
}

// Accumulates dw/db; writes dx when dx != nullptr.
template <typename T>
void conv_backward(const ConvCache<T>& cache, const Tensor<T>& w,
                   const Act<T>& dy, Tensor<T>& dw, Tensor<T>& db,
                   Act<T>* dx) {
  const int cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
  const int kk = cin * k * k;
  const std::int64_t ocols = dy.cols();
  // dW += dY * cols^T
  gemm(false, true, cout, kk, static_cast<int>(ocols), T(1), dy.v.data(),
       static_cast<int>(ocols), cache.cols.data(), static_cast<int>(ocols),
       T(1), dw.data(), kk);
  for (int c = 0; c < cout; ++c) {
    const T* row = dy.row(c);
    T acc = T(0);
    for (std::int64_t i = 0; i < ocols; ++i) acc += row[i];
    db[c] += acc;
  }
  if (dx != nullptr) {
    std::vector<T> dcols(static_cast<std::size_t>(kk) * ocols);
    gemm(true, false, kk, static_cast<int>(ocols), cout, T(1), w.data(), kk,
         dy.v.data(), static_cast<int>(ocols), T(0), dcols.data(),
         static_cast<int>(ocols));
    *dx = Act<T>(cache.n, cin, cache.in_h, cache.in_w);
    col2im(dcols, cin, k, cache.stride, *dx, cache.oh, cache.ow);
  }
}

// ---------------------------------------------------------------------------
// Batch normalization (per channel over N,H,W)
// ---------------------------------------------------------------------------

template <typename T>
struct BnCache {
  std::vector<T> xhat;    // same layout as the activation
  std::vector<T> invstd;  // per channel
  bool training = true;
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

template <typename T>
Act<T> bn_forward(const Act<T>& x, const Tensor<T>& gamma,
                  const Tensor<T>& beta, Tensor<T>& run_mean,
                  Tensor<T>& run_var, bool training, BnCache<T>& cache) {
  const std::int64_t m = x.cols();
  Act<T> y(x.n, x.c, x.h, x.w);
  cache.training = training;
  cache.xhat.resize(x.v.size());
  cache.invstd.resize(static_cast<std::size_t>(x.c));
  for (int c = 0; c < x.c; ++c) {
    const T* xr = x.row(c);
    T* yr = y.row(c);
    T* xh = cache.xhat.data() + static_cast<std::int64_t>(c) * m;
    T mean, var;
    if (training) {
      T s = T(0);
      for (std::int64_t i = 0; i < m; ++i) s += xr[i];
      mean = s / static_cast<T>(m);
      T v2 = T(0);
      for (std::int64_t i = 0; i < m; ++i) {
        const T d = xr[i] - mean;
        v2 += d * d;
      }
      var = v2 / static_cast<T>(m);
      run_mean[c] = static_cast<T>((1.0 - kBnMomentum)) * run_mean[c] +
                    static_cast<T>(kBnMomentum) * mean;
      run_var[c] = static_cast<T>((1.0 - kBnMomentum)) * run_var[c] +
                   static_cast<T>(kBnMomentum) * var;
    } else {
      mean = run_mean[c];
      var = run_var[c];
    }
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kBnEps));
    cache.invstd[c] = inv;
    const T g = gamma[c], bt = beta[c];
    for (std::int64_t i = 0; i < m; ++i) {
      xh[i] = (xr[i] - mean) * inv;
      yr[i] = g * xh[i] + bt;
    }
  }
  return y;
}

template <typename T>
Act<T> bn_backward(const BnCache<T>& cache, const Tensor<T>& gamma,
                   const Act<T>& dy, Tensor<T>& dgamma, Tensor<T>& dbeta) {
  const std::int64_t m = dy.cols();
  Act<T> dx(dy.n, dy.c, dy.h, dy.w);
  for (int c = 0; c < dy.c; ++c) {
    const T* dyr = dy.row(c);
    const T* xh = cache.xhat.data() + static_cast<std::int64_t>(c) * m;
    T* dxr = dx.row(c);
    T sum_dy = T(0), sum_dy_xh = T(0);
    for (std::int64_t i = 0; i < m; ++i) {
      sum_dy += dyr[i];
      sum_dy_xh += dyr[i] * xh[i];
    }
    dgamma[c] += sum_dy_xh;
    dbeta[c] += sum_dy;
    const T g = gamma[c], inv = cache.invstd[c];
    if (cache.training) {
      const T im = T(1) / static_cast<T>(m);
      for (std::int64_t i = 0; i < m; ++i) {
        dxr[i] = g * inv * (dyr[i] - sum_dy * im - xh[i] * sum_dy_xh * im);
      }
    } else {
      for (std::int64_t i = 0; i < m; ++i) dxr[i] = g * inv * dyr[i];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU (backward keyed on the stored forward output)
// ---------------------------------------------------------------------------

template <typename T>
void relu_inplace(Act<T>& x) {
  for (T& v : x.v)
    if (v < T(0)) v = T(0);
}

template <typename T>
void relu_backward_inplace(const Act<T>& y, Act<T>& dy) {
  for (std::size_t i = 0; i < dy.v.size(); ++i)
    if (y.v[i] <= T(0)) dy.v[i] = T(0);
}

// ---------------------------------------------------------------------------
// Average pooling by an integer factor
// ---------------------------------------------------------------------------

template <typename T>
Act<T> avgpool_forward(const Act<T>& x, int f) {
  require(x.h % f == 0 && x.w % f == 0, "avgpool: size not divisible");
  Act<T> y(x.n, x.c, x.h / f, x.w / f);
  const T scale = T(1) / static_cast<T>(f * f);
  for (int c = 0; c < x.c; ++c) {
    for (int s = 0; s < x.n; ++s) {
      for (int oy = 0; oy < y.h; ++oy) {
        for (int ox = 0; ox < y.w; ++ox) {
          T acc = T(0);
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx)
              acc += x.at(c, s, oy * f + dy, ox * f + dx);
          y.at(c, s, oy, ox) = acc * scale;
        }
      }
    }
  }
  return y;
}

template <typename T>
Act<T> avgpool_backward(const Act<T>& dy, int f, int in_h, int in_w) {
  Act<T> dx(dy.n, dy.c, in_h, in_w);
  const T scale = T(1) / static_cast<T>(f * f);
  for (int c = 0; c < dy.c; ++c) {
    for (int s = 0; s < dy.n; ++s) {
      for (int oy = 0; oy < dy.h; ++oy) {
        for (int ox = 0; ox < dy.w; ++ox) {
          const T g = dy.at(c, s, oy, ox) * scale;
          for (int ddy = 0; ddy < f; ++ddy)
            for (int ddx = 0; ddx < f; ++ddx)
              dx.at(c, s, oy * f + ddy, ox * f + ddx) = g;
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Bilinear 2x upsampling (half-pixel centers, clamped at the border)
// ---------------------------------------------------------------------------

namespace detail {
inline void bilinear_taps(int out_i, int in_size, int& i0, int& i1, double& w1) {
  const double src = (out_i + 0.5) / 2.0 - 0.5;
  double f = std::floor(src);
  i0 = static_cast<int>(f);
  w1 = src - f;
  i1 = i0 + 1;
  if (i0 < 0) { i0 = 0; }
  if (i1 > in_size - 1) { i1 = in_size - 1; }
}
}  // namespace detail

template <typename T>
Act<T> upsample2x_forward(const Act<T>& x) {
  Act<T> y(x.n, x.c, x.h * 2, x.w * 2);
  for (int oy = 0; oy < y.h; ++oy) {
    int y0, y1;
    double wy;
    detail::bilinear_taps(oy, x.h, y0, y1, wy);
    for (int ox = 0; ox < y.w; ++ox) {
      int x0, x1;
      double wx;
      detail::bilinear_taps(ox, x.w, x0, x1, wx);
      for (int c = 0; c < x.c; ++c) {
        for (int s = 0; s < x.n; ++s) {
          const double v00 = x.at(c, s, y0, x0);
          const double v01 = x.at(c, s, y0, x1);
          const double v10 = x.at(c, s, y1, x0);
          const double v11 = x.at(c, s, y1, x1);
          y.at(c, s, oy, ox) = static_cast<T>(
              (1 - wy) * ((1 - wx) * v00 + wx * v01) +
              wy * ((1 - wx) * v10 + wx * v11));
        }
      }
    }
  }
  return y;
}

template <typename T>
Act<T> upsample2x_backward(const Act<T>& dy, int in_h, int in_w) {
  Act<T> dx(dy.n, dy.c, in_h, in_w);
  for (int oy = 0; oy < dy.h; ++oy) {
    int y0, y1;
    double wy;
    detail::bilinear_taps(oy, in_h, y0, y1, wy);
    for (int ox = 0; ox < dy.w; ++ox) {
      int x0, x1;
      double wx;
      detail::bilinear_taps(ox, in_w, x0, x1, wx);
      for (int c = 0; c < dy.c; ++c) {
        for (int s = 0; s < dy.n; ++s) {
          const T g = dy.at(c, s, oy, ox);
          dx.at(c, s, y0, x0) += static_cast<T>((1 - wy) * (1 - wx)) * g;
          dx.at(c, s, y0, x1) += static_cast<T>((1 - wy) * wx) * g;
          dx.at(c, s, y1, x0) += static_cast<T>(wy * (1 - wx)) * g;
          dx.at(c, s, y1, x1) += static_cast<T>(wy * wx) * g;
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Logistic squash with (eps, 1-eps) clamping; backward is zero where the
// clamp was active.
// ---------------------------------------------------------------------------

inline constexpr double kSquashEps = 1e-7;

template <typename T>
Act<T> sigmoid_forward(const Act<T>& x, std::vector<bool>* clamped) {
  Act<T> y(x.n, x.c, x.h, x.w);
  if (clamped) clamped->assign(x.v.size(), false);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x.v[i])));
    if (s < kSquashEps) {
      s = kSquashEps;
      if (clamped) (*clamped)[i] = true;
    } else if (s > 1.0 - kSquashEps) {
      s = 1.0 - kSquashEps;
      if (clamped) (*clamped)[i] = true;
    }
    y.v[i] = static_cast<T>(s);
  }
  return y;
}

template <typename T>
Act<T> sigmoid_backward(const Act<T>& y, const Act<T>& dy,
                        const std::vector<bool>& clamped) {
  Act<T> dx(dy.n, dy.c, dy.h, dy.w);
  for (std::size_t i = 0; i < dy.v.size(); ++i) {
    dx.v[i] = clamped[i] ? T(0) : dy.v[i] * y.v[i] * (T(1) - y.v[i]);
  }
  return dx;
}

}  // namespace ockd
