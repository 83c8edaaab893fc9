#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ockd/data.hpp"
#include "ockd/rng.hpp"

namespace ockd {

struct SplitCounts {
  int genuine = 0;
  int attack = 0;
};

// Procedural stand-in for one capture domain: genuine samples are smooth
// face-like blob renders under the domain's hue/illumination; attacks are the
// same renders degraded by blur, a period-4 grid overlay (display/print
// moire cue), and a color shift.
struct DomainSpec {
  int id = 0;
  double hue = 0.08;          // base color angle in [0, 1)
  double illumination = 1.0;  // global gain
  double noise = 0.02;        // additive pixel noise stddev

  double grid_strength = 0.18;
  int blur_radius = 1;        // box blur half-width, 0 disables
  std::array<double, 3> color_shift{0.06, 0.0, -0.05};

  SplitCounts train, validation, test;
  std::uint64_t seed = 0;

  void validate() const {
    if (hue < 0 || hue >= 1) throw config_error("hue must be in [0,1)");
    if (illumination <= 0 || illumination > 4)
      throw config_error("illumination gain must be in (0,4]");
    if (noise < 0 || noise > 0.5)
      throw config_error("noise level must be in [0,0.5]");
    if (grid_strength < 0 || grid_strength > 1)
      throw config_error("grid strength must be in [0,1]");
    if (blur_radius < 0 || blur_radius > 8)
      throw config_error("blur radius must be in [0,8]");
    for (double c : color_shift)
      if (c < -0.5 || c > 0.5)
        throw config_error("color shift components must be in [-0.5,0.5]");
    for (const auto* s : {&train, &validation, &test})
      if (s->genuine < 0 || s->attack < 0)
        throw config_error("split counts must be >= 0");
    if (train.genuine + train.attack + validation.genuine + validation.attack +
            test.genuine + test.attack <
        1)
      throw config_error("domain must contain at least one sample");
  }
};

namespace detail {

// base RGB from a hue angle; kept smooth and bright so the renders stay
// comfortably inside [0,1] before the attack perturbation
inline std::array<double, 3> hue_rgb(double hue) {
  const double t = 6.283185307179586 * hue;
  return {0.62 + 0.20 * std::cos(t), 0.52 + 0.20 * std::cos(t - 2.094),
          0.46 + 0.20 * std::cos(t + 2.094)};
}

template <typename T>
void render_genuine(Tensor<T>& img, const DomainSpec& spec, Rng& rng) {
  const int n = kImageSize;
  const auto base = hue_rgb(spec.hue);
  // jittered face ellipse and landmarks
  const double cx = 0.5 + rng.uniform(-0.06, 0.06);
  const double cy = 0.52 + rng.uniform(-0.06, 0.06);
  const double rx = 0.30 + rng.uniform(-0.04, 0.04);
  const double ry = 0.40 + rng.uniform(-0.04, 0.04);
  const double eye_y = cy - 0.14 + rng.uniform(-0.02, 0.02);
  const double eye_dx = 0.12 + rng.uniform(-0.02, 0.02);
  const double mouth_y = cy + 0.18 + rng.uniform(-0.02, 0.02);
  const double tilt = rng.uniform(-0.25, 0.25);  // illumination direction

  for (int y = 0; y < n; ++y) {
    const double fy = (y + 0.5) / n;
    for (int x = 0; x < n; ++x) {
      const double fx = (x + 0.5) / n;
      const double ex = (fx - cx) / rx;
      const double ey = (fy - cy) / ry;
      const double r2 = ex * ex + ey * ey;

      double shade;
      if (r2 < 1.0) {
        shade = 1.0 - 0.25 * r2;  // rounded face shading
        auto blob = [&](double bx, double by, double br, double depth) {
          const double d2 = ((fx - bx) * (fx - bx) + (fy - by) * (fy - by)) /
                            (br * br);
          if (d2 < 1.0) shade -= depth * (1.0 - d2);
        };
        blob(cx - eye_dx, eye_y, 0.045, 0.5);
        blob(cx + eye_dx, eye_y, 0.045, 0.5);
        blob(cx, mouth_y, 0.06, 0.35);
        blob(cx, cy + 0.02, 0.035, 0.12);  // nose hint
      } else {
        shade = 0.35 - 0.10 * std::min(r2 - 1.0, 1.5);  // background falloff
      }
      const double light =
          spec.illumination * (1.0 + tilt * (fx - 0.5) + 0.08 * (0.5 - fy));
      for (int c = 0; c < 3; ++c) {
        const double v = base[static_cast<std::size_t>(c)] * shade * light +
                         spec.noise * rng.normal();
        img.v[(static_cast<std::int64_t>(c) * n + y) * n + x] =
            static_cast<T>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

template <typename T>
void apply_attack(Tensor<T>& img, const DomainSpec& spec) {
  const int n = kImageSize;
  if (spec.blur_radius > 0) {
    const int r = spec.blur_radius;
    Tensor<T> tmp = img;
    for (int c = 0; c < 3; ++c) {
      T* plane = img.v.data() + static_cast<std::int64_t>(c) * n * n;
      const T* src = tmp.v.data() + static_cast<std::int64_t>(c) * n * n;
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          double acc = 0;
          int cnt = 0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= n || xx < 0 || xx >= n) continue;
              acc += static_cast<double>(src[yy * n + xx]);
              ++cnt;
            }
          plane[y * n + x] = static_cast<T>(acc / cnt);
        }
    }
  }
  // period-4 grid overlay plus the domain's color shift
  constexpr double kGridPeriod = 4.0;
  constexpr double kTau = 6.283185307179586;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double grid =
            0.5 * spec.grid_strength *
            (std::sin(kTau * x / kGridPeriod) + std::sin(kTau * y / kGridPeriod));
        auto& v = img.v[(static_cast<std::int64_t>(c) * n + y) * n + x];
        v = static_cast<T>(std::clamp(
            static_cast<double>(v) + grid + spec.color_shift[static_cast<std::size_t>(c)],
            0.0, 1.0));
      }
}

inline std::uint64_t sample_id(int domain, Split split, int label, int index) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(domain))
          << 40) |
         (static_cast<std::uint64_t>(static_cast<int>(split)) << 36) |
         (static_cast<std::uint64_t>(label) << 32) |
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(index));
}

}  // namespace detail

// One sample, deterministic in (spec.seed, split, label, index) alone.
template <typename T>
Sample<T> generate_sample(const DomainSpec& spec, Split split, int label,
                          int index) {
  Sample<T> s;
  s.image = Tensor<T>({kImageChannels, kImageSize, kImageSize});
  s.label = label;
  s.split = split;
  s.id = detail::sample_id(spec.id, split, label, index);
  // attacks composite the perturbation over the matching genuine render, so
  // the base stream is keyed with the genuine label
  Rng rng(Rng::mix(spec.seed, detail::sample_id(spec.id, split, kGenuine,
                                                index)));
  detail::render_genuine(s.image, spec, rng);
  if (label == kAttack) detail::apply_attack(s.image, spec);
  return s;
}

template <typename T>
Dataset<T> generate_domain(const DomainSpec& spec) {
  spec.validate();
  Dataset<T> out;
  auto emit = [&](Split split, const SplitCounts& c) {
    for (int i = 0; i < c.genuine; ++i)
      out.push_back(generate_sample<T>(spec, split, kGenuine, i));
    for (int i = 0; i < c.attack; ++i)
      out.push_back(generate_sample<T>(spec, split, kAttack, i));
  };
  emit(Split::train, spec.train);
  emit(Split::validation, spec.validation);
  emit(Split::test, spec.test);
  return out;
}

// Per-client variant of a target domain: same perturbation family, slightly
// different appearance and an independent sample-id space.
inline DomainSpec client_variant(const DomainSpec& base, int client) {
  require(client >= 0, "client index must be >= 0");
  DomainSpec d = base;
  d.id = base.id * 1000 + 1 + client;
  const double u =
      static_cast<double>(Rng::mix(base.seed, 77 + static_cast<std::uint64_t>(
                                                       client)) >>
                          11) *
      0x1.0p-53;
  d.hue = std::fmod(base.hue + 0.04 * u + 1.0, 1.0);
  d.illumination = base.illumination * (0.92 + 0.16 * u);
  d.seed = Rng::mix(base.seed, 1000 + static_cast<std::uint64_t>(client));
  return d;
}

// Projection of the image onto the period-4 grid harmonics; the fixed
// band-pass statistic used to verify attacks carry grid energy.
template <typename T>
double grid_energy(const Tensor<T>& img) {
  require(img.shape.size() == 3, "grid_energy expects a (C,H,W) image");
  const int ch = static_cast<int>(img.shape[0]);
  const int h = static_cast<int>(img.shape[1]);
  const int w = static_cast<int>(img.shape[2]);
  constexpr double kTau = 6.283185307179586;
  double total = 0;
  for (int c = 0; c < ch; ++c) {
    double xr = 0, xi = 0, yr = 0, yi = 0;
    const T* plane = img.v.data() + static_cast<std::int64_t>(c) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = static_cast<double>(plane[y * w + x]);
        xr += v * std::cos(kTau * x / 4.0);
        xi += v * std::sin(kTau * x / 4.0);
        yr += v * std::cos(kTau * y / 4.0);
        yi += v * std::sin(kTau * y / 4.0);
      }
    const double npix = static_cast<double>(h) * w;
    total += (std::sqrt(xr * xr + xi * xi) + std::sqrt(yr * yr + yi * yi)) /
             npix;
  }
  return total / ch;
}

}  // namespace ockd
