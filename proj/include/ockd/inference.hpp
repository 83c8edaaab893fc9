#pragma once

#include <vector>

#include "ockd/data.hpp"
#include "ockd/losses.hpp"
#include "ockd/net.hpp"

namespace ockd {

struct DecisionRule {
  double delta = 0.5;
};

// xi_t: mean of the three per-level cosine distances between the frozen
// teacher's and the student's pyramids; attack-high orientation, in [0, 2].
template <typename T>
std::vector<double> score(const ParamSet<T>& teacher,
                          const ParamSet<T>& student,
                          const ExtractorArch& arch,
                          const ImageBatch<T>& batch) {
  auto tpyr = forward_features(teacher, arch, batch, false);
  auto spyr = forward_features(student, arch, batch, false);
  std::vector<double> xi(static_cast<std::size_t>(batch.batch_size()), 0.0);
  for (int l = 0; l < 3; ++l) {
    const auto d = level_distances(tpyr.level(l), spyr.level(l));
    for (std::size_t i = 0; i < xi.size(); ++i) xi[i] += d[i] / 3.0;
  }
  return xi;
}

// Decision rule: genuine iff xi < delta, the boundary goes to attack.
inline int classify(double xi, const DecisionRule& rule) {
  return xi < rule.delta ? kGenuine : kAttack;
}

// DT-only baseline: the mean of the pixel map, attack-high.
template <typename T>
std::vector<double> dt_baseline_score(const ParamSet<T>& teacher,
                                      const ParamSet<T>& final_block,
                                      const ExtractorArch& arch,
                                      const FcbArch& fcb_arch,
                                      const ImageBatch<T>& batch) {
  auto pyr = forward_features(teacher, arch, batch, false);
  auto d = forward_pixel_map(final_block, fcb_arch, pyr, false);
  const std::int64_t hw =
      static_cast<std::int64_t>(d.d.dim(2)) * d.d.dim(3);
  std::vector<double> out(static_cast<std::size_t>(d.d.dim(0)));
  for (std::size_t s = 0; s < out.size(); ++s) {
    double acc = 0;
    for (std::int64_t i = 0; i < hw; ++i)
      acc += static_cast<double>(d.d.v[s * hw + i]);
    out[s] = acc / static_cast<double>(hw);
  }
  return out;
}

}  // namespace ockd
