#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ockd/common.hpp"
#include "ockd/net.hpp"
#include "ockd/optim.hpp"
#include "ockd/sparse_mask.hpp"

namespace ockd {

inline constexpr double kGrowthEps = 1e-8;

struct RegrowthConfig {
  int period = 60;          // T
  double initial_rate = 0.5;  // r0
  int total_iters = 1500;     // K2

  void validate() const {
    if (total_iters < 1) throw config_error("total iterations must be >= 1");
    if (period < 1 || period > total_iters)
      throw config_error("regrowth period must satisfy 1 <= T <= K2");
    if (initial_rate <= 0 || initial_rate >= 1)
      throw config_error("initial regrowth rate must be in (0,1)");
  }
};

namespace detail {

// indices of the k largest |values|, ties broken by ascending index
template <typename T>
std::vector<std::uint32_t> top_k_by_magnitude(
    const std::vector<std::uint32_t>& candidates, const T* values,
    std::size_t k) {
  std::vector<std::uint32_t> idx = candidates;
  std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(static_cast<double>(values[a]));
    const double mb = std::abs(static_cast<double>(values[b]));
    if (ma != mb) return ma > mb;
    return a < b;
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

// indices of the k smallest |values|, ties broken by ascending index
template <typename T>
std::vector<std::uint32_t> bottom_k_by_magnitude(
    const std::vector<std::uint32_t>& candidates, const T* values,
    std::size_t k) {
  std::vector<std::uint32_t> idx = candidates;
  std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(static_cast<double>(values[a]));
    const double mb = std::abs(static_cast<double>(values[b]));
    if (ma != mb) return ma < mb;
    return a < b;
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

}  // namespace detail

// Magnitude top-k of the indicators (default: the initial weights) forms the
// active set; inactive weights are zeroed.
template <typename T>
SparsityMask init_masks(ParamSet<T>& params, double density,
                        const std::vector<Tensor<T>>* indicators = nullptr) {
  if (density <= 0.0 || density > 1.0)
    throw config_error("density must be in (0, 1]");
  SparsityMask mask;
  mask.density = density;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    auto& w = params.layers[li].w;
    const T* v = indicators ? (*indicators)[li].data() : w.data();
    const std::uint32_t lm = static_cast<std::uint32_t>(w.numel());
    const std::size_t k =
        static_cast<std::size_t>(std::ceil(static_cast<double>(lm) * density));
    std::vector<std::uint32_t> all(lm);
    std::iota(all.begin(), all.end(), 0u);
    SparsityMask::Layer layer;
    layer.active.assign(lm, 0);
    for (std::uint32_t i : detail::top_k_by_magnitude(all, v, k))
      layer.active[i] = 1;
    layer.active_count = static_cast<std::uint32_t>(k);
    for (std::uint32_t i = 0; i < lm; ++i)
      if (!layer.active[i]) w[i] = T(0);
    mask.layers.push_back(std::move(layer));
  }
  return mask;
}

template <typename T>
void apply_masks(ParamSet<T>& params, const SparsityMask& mask) {
  require(params.layers.size() == mask.layers.size(),
          "apply_masks: layer count mismatch");
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    auto& w = params.layers[li].w;
    require(w.numel() == static_cast<std::int64_t>(mask.layers[li].size()),
            "apply_masks: layer size mismatch");
    for (std::int64_t i = 0; i < w.numel(); ++i)
      if (!mask.layers[li].active[static_cast<std::size_t>(i)]) w[i] = T(0);
  }
}

// P_m: the floor(|A_m| * r) active indices of smallest weight magnitude.
template <typename T>
std::vector<std::vector<std::uint32_t>> prune_set(const ParamSet<T>& params,
                                                  const SparsityMask& mask,
                                                  double rate) {
  require(rate >= 0.0 && rate < 1.0, "prune rate must be in [0, 1)");
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& layer = mask.layers[li];
    const std::size_t k = static_cast<std::size_t>(
        std::floor(static_cast<double>(layer.active_count) * rate));
    out.push_back(detail::bottom_k_by_magnitude(
        layer.active_indices(), params.layers[li].w.data(), k));
  }
  return out;
}

// mu = p / (sqrt(q) + eps) per conv weight, from the optimizer moments.
template <typename T>
std::vector<Tensor<T>> growth_score(const AdamState<T>& moments) {
  std::vector<Tensor<T>> out;
  for (std::size_t li = 0; li < moments.p.size(); ++li) {
    const auto& p = moments.p[li].w;
    const auto& q = moments.q[li].w;
    Tensor<T> mu(p.shape);
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double pv = p[i], qv = q[i];
      if (!std::isfinite(pv) || !std::isfinite(qv))
        throw numeric_error("growth_score: non-finite moments");
      mu[i] = static_cast<T>(pv / (std::sqrt(qv) + kGrowthEps));
    }
    out.push_back(std::move(mu));
  }
  return out;
}

// G_m: the counts[m] inactive indices of largest |mu|; candidates may be
// restricted (used to keep G disjoint from the just-pruned set).
template <typename T>
std::vector<std::vector<std::uint32_t>> grow_set(
    const std::vector<Tensor<T>>& mu, const SparsityMask& mask,
    const std::vector<std::size_t>& counts,
    const std::vector<std::vector<std::uint32_t>>* exclude = nullptr) {
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t li = 0; li < mask.layers.size(); ++li) {
    std::vector<std::uint32_t> cand = mask.layers[li].inactive_indices();
    if (exclude != nullptr) {
      std::vector<std::uint8_t> drop(mask.layers[li].size(), 0);
      for (std::uint32_t i : (*exclude)[li]) drop[i] = 1;
      std::erase_if(cand, [&](std::uint32_t i) { return drop[i] != 0; });
    }
    if (counts[li] > cand.size())
      throw contract_error("grow_set: count exceeds inactive candidates");
    out.push_back(
        detail::top_k_by_magnitude(cand, mu[li].data(), counts[li]));
  }
  return out;
}

// r(k) = (r0/2) * (1 + cos(pi * k / K2))
inline double cosine_decay(double r0, int k, int total_iters) {
  if (total_iters == 0) throw config_error("cosine_decay: K2 must be nonzero");
  return 0.5 * r0 *
         (1.0 + std::cos(M_PI * static_cast<double>(k) /
                         static_cast<double>(total_iters)));
}

// One prune/grow cycle: density-preserving per layer, grown weights start at
// 0 with their moments reset.
template <typename T>
void regrowth_cycle(ParamSet<T>& params, SparsityMask& mask,
                    AdamState<T>& moments, double rate) {
  auto pruned = prune_set(params, mask, rate);
  std::vector<std::size_t> counts;
  for (std::size_t li = 0; li < pruned.size(); ++li) {
    // regrowth must find |P| fresh entries in B; at (near-)full density the
    // cycle degenerates toward a no-op rather than overdraining the layer
    const std::size_t cap =
        mask.layers[li].size() - mask.layers[li].active_count;
    if (pruned[li].size() > cap) pruned[li].resize(cap);
    counts.push_back(pruned[li].size());
  }
  const auto mu = growth_score(moments);
  const auto grown = grow_set(mu, mask, counts, &pruned);
  for (std::size_t li = 0; li < mask.layers.size(); ++li) {
    auto& layer = mask.layers[li];
    auto& w = params.layers[li].w;
    for (std::uint32_t i : pruned[li]) {
      layer.active[i] = 0;
      w[i] = T(0);
    }
    for (std::uint32_t i : grown[li]) {
      layer.active[i] = 1;
      w[i] = T(0);
      moments.reset_weight_moment(li, i);
    }
  }
}

}  // namespace ockd
