#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ockd/common.hpp"
#include "ockd/net.hpp"

namespace ockd {

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kNormFloor = 1e-12;

struct DistillWeights {
  double l1 = 0.33, l2 = 0.33, l3 = 0.33;

  void validate() const {
    if (l1 < 0 || l2 < 0 || l3 < 0 || (l1 == 0 && l2 == 0 && l3 == 0))
      throw config_error("distill weights must be >= 0 with at least one > 0");
  }
  double level(int l) const { return l == 0 ? l1 : (l == 1 ? l2 : l3); }
};

// ---------------------------------------------------------------------------
// Pixel-wise binary cross-entropy against the constant 0/1 class map
// ---------------------------------------------------------------------------

template <typename T>
double pixel_bce(const Act<T>& d, const std::vector<int>& labels) {
  require(d.c == 1, "pixel map must have 1 channel");
  require(labels.size() == static_cast<std::size_t>(d.n),
          "pixel_bce: one label per sample required");
  const std::int64_t hw = static_cast<std::int64_t>(d.h) * d.w;
  double total = 0.0;
  for (int s = 0; s < d.n; ++s) {
    const double y = labels[s] ? 1.0 : 0.0;
    double acc = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) {
      double p = static_cast<double>(d.v[s * hw + i]);
      if (!std::isfinite(p)) throw numeric_error("pixel map is not finite");
      if (p < kBceClamp) p = kBceClamp;
      if (p > 1.0 - kBceClamp) p = 1.0 - kBceClamp;
      acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    total += acc / static_cast<double>(hw);
  }
  return total / static_cast<double>(d.n);
}

template <typename T>
double pixel_bce(const PixelMap<T>& d, const std::vector<int>& labels) {
  const int n = d.d.dim(0), h = d.d.dim(2), w = d.d.dim(3);
  Act<T> a(n, 1, h, w);
  std::copy(d.d.v.begin(), d.d.v.end(), a.v.begin());
  return pixel_bce(a, labels);
}

// dLoss/d(pixel map); zero where the clamp was active.
template <typename T>
Act<T> pixel_bce_backward(const Act<T>& d, const std::vector<int>& labels) {
  const std::int64_t hw = static_cast<std::int64_t>(d.h) * d.w;
  const double scale = 1.0 / (static_cast<double>(d.n) * hw);
  Act<T> g(d.n, 1, d.h, d.w);
  for (int s = 0; s < d.n; ++s) {
    const double y = labels[s] ? 1.0 : 0.0;
    for (std::int64_t i = 0; i < hw; ++i) {
      const double p = static_cast<double>(d.v[s * hw + i]);
      if (p < kBceClamp || p > 1.0 - kBceClamp) {
        g.v[s * hw + i] = T(0);
      } else {
        g.v[s * hw + i] = static_cast<T>((p - y) / (p * (1.0 - p)) * scale);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Cosine distance
// ---------------------------------------------------------------------------

template <typename T>
double cosine_distance(std::span<const T> f, std::span<const T> fp) {
  require(f.size() == fp.size() && !f.empty(),
          "cosine_distance: vectors must be nonempty and equal-sized");
  double dot = 0, n1 = 0, n2 = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double a = static_cast<double>(f[i]);
    const double b = static_cast<double>(fp[i]);
    if (!std::isfinite(a) || !std::isfinite(b))
      throw numeric_error("cosine_distance: non-finite input");
    dot += a * b;
    n1 += a * a;
    n2 += b * b;
  }
  return 1.0 - dot / ((std::sqrt(n1) + kNormFloor) *
                      (std::sqrt(n2) + kNormFloor));
}

template <typename T>
double cosine_distance(const std::vector<T>& f, const std::vector<T>& fp) {
  return cosine_distance(std::span<const T>(f), std::span<const T>(fp));
}

namespace detail {

// dot / |f|^2 / |f'|^2 of one sample's flattened level features
template <typename T>
void sample_stats(const Act<T>& a, const Act<T>& b, int s, double& dot,
                  double& na2, double& nb2) {
  const std::int64_t hw = static_cast<std::int64_t>(a.h) * a.w;
  dot = na2 = nb2 = 0;
  for (int c = 0; c < a.c; ++c) {
    const T* ra = a.row(c) + s * hw;
    const T* rb = b.row(c) + s * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      const double x = ra[i], y = rb[i];
      dot += x * y;
      na2 += x * x;
      nb2 += y * y;
    }
  }
}

}  // namespace detail

// Per-sample cosine distances at one pyramid level (features flattened per
// sample).
template <typename T>
std::vector<double> level_distances(const Act<T>& f, const Act<T>& fp) {
  require(f.n == fp.n && f.c == fp.c && f.h == fp.h && f.w == fp.w,
          "level_distances: shape mismatch");
  std::vector<double> out(f.n);
  for (int s = 0; s < f.n; ++s) {
    double dot, na2, nb2;
    detail::sample_stats(f, fp, s, dot, na2, nb2);
    if (!std::isfinite(dot) || !std::isfinite(na2) || !std::isfinite(nb2))
      throw numeric_error("level_distances: non-finite features");
    out[s] = 1.0 - dot / ((std::sqrt(na2) + kNormFloor) *
                          (std::sqrt(nb2) + kNormFloor));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-level distillation loss
// ---------------------------------------------------------------------------

template <typename T>
double distill_loss(const FeaturePyramid<T>& teacher,
                    const FeaturePyramid<T>& student,
                    const DistillWeights& w) {
  w.validate();
  const int n = teacher.f1.n;
  double total = 0;
  for (int l = 0; l < 3; ++l) {
    if (w.level(l) == 0) continue;
    const auto d = level_distances(teacher.level(l), student.level(l));
    double s = 0;
    for (double x : d) s += x;
    total += w.level(l) * s;
  }
  return total / static_cast<double>(n);
}

// Gradients w.r.t. the student pyramid, as extractor tap gradients.
template <typename T>
std::vector<Act<T>> distill_loss_backward(const FeaturePyramid<T>& teacher,
                                          const FeaturePyramid<T>& student,
                                          const DistillWeights& w) {
  const int n = teacher.f1.n;
  std::vector<Act<T>> taps(3);
  for (int l = 0; l < 3; ++l) {
    const Act<T>& f = teacher.level(l);
    const Act<T>& fp = student.level(l);
    taps[l] = Act<T>(fp.n, fp.c, fp.h, fp.w);
    if (w.level(l) == 0) continue;
    const double coeff = w.level(l) / static_cast<double>(n);
    const std::int64_t hw = static_cast<std::int64_t>(f.h) * f.w;
    for (int s = 0; s < n; ++s) {
      double dot, na2, nb2;
      detail::sample_stats(f, fp, s, dot, na2, nb2);
      const double nf = std::sqrt(na2) + kNormFloor;
      const double nfp = std::sqrt(nb2) + kNormFloor;
      const double a = 1.0 / (nf * nfp);
      const double b =
          nb2 > 0 ? dot / (nf * nfp * nfp * std::sqrt(nb2)) : 0.0;
      for (int c = 0; c < f.c; ++c) {
        const T* rf = f.row(c) + s * hw;
        const T* rfp = fp.row(c) + s * hw;
        T* rt = taps[l].row(c) + s * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          rt[i] = static_cast<T>(coeff * (b * rfp[i] - a * rf[i]));
        }
      }
    }
  }
  return taps;
}

}  // namespace ockd
