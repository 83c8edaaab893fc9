#pragma once

#include <cmath>
#include <cstdint>

#include "ockd/net.hpp"
#include "ockd/sparse_mask.hpp"

namespace ockd {

// Adaptive moment estimation. The raw first/second moments double as the
// growth indicators of the sparse engine, so they are always accumulated
// densely; the masked step only applies updates to active weights.
template <typename T>
struct AdamState {
  ParamGrads<T> p;  // first moments
  ParamGrads<T> q;  // second moments, elementwise >= 0
  std::int64_t step_count = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState init(const ParamSet<T>& params) {
    AdamState s;
    s.p = zero_grads(params);
    s.q = zero_grads(params);
    return s;
  }

  void step(ParamSet<T>& params, const ParamGrads<T>& grads, double lr,
            const SparsityMask* mask = nullptr) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
      auto& lp = params.layers[li];
      update_tensor(lp.w, grads[li].w, p[li].w, q[li].w, lr, bc1, bc2,
                    mask ? &mask->layers[li] : nullptr);
      update_tensor(lp.b, grads[li].b, p[li].b, q[li].b, lr, bc1, bc2,
                    nullptr);
      if (lp.has_bn) {
        update_tensor(lp.gamma, grads[li].gamma, p[li].gamma, q[li].gamma, lr,
                      bc1, bc2, nullptr);
        update_tensor(lp.beta, grads[li].beta, p[li].beta, q[li].beta, lr,
                      bc1, bc2, nullptr);
      }
    }
  }

  void reset_weight_moment(std::size_t layer, std::uint32_t index) {
    p[layer].w[index] = T(0);
    q[layer].w[index] = T(0);
  }

 private:
  void update_tensor(Tensor<T>& w, const Tensor<T>& g, Tensor<T>& m,
                     Tensor<T>& v, double lr, double bc1, double bc2,
                     const SparsityMask::Layer* ml) {
    for (std::int64_t i = 0; i < w.numel(); ++i) {
      m[i] = static_cast<T>(beta1 * m[i] + (1.0 - beta1) * g[i]);
      v[i] = static_cast<T>(beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]);
      if (ml != nullptr && !ml->active[static_cast<std::size_t>(i)]) {
        w[i] = T(0);
        continue;
      }
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
};

}  // namespace ockd
