#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "ockd/common.hpp"
#include "ockd/layers.hpp"
#include "ockd/rng.hpp"
#include "ockd/tensor.hpp"

namespace ockd {

// ---------------------------------------------------------------------------
// Architecture description
// ---------------------------------------------------------------------------

struct ConvLayerSpec {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  bool normalization = true;
  bool nonlinearity = true;
};

struct ConvBlockSpec {
  std::vector<ConvLayerSpec> layers;
  int downsample = 2;  // applied at block end, in {1, 2}
};

using ExtractorArch = std::vector<ConvBlockSpec>;

// Fusion head: pyramid levels pooled to the coarsest resolution, channel
// concatenated, then these conv layers, logistic squash, 2x bilinear upsample.
struct FcbArch {
  std::vector<ConvLayerSpec> layers;
};

inline void validate_arch(const std::vector<ConvBlockSpec>& arch) {
  if (arch.empty()) throw config_error("architecture has no blocks");
  for (const auto& b : arch) {
    if (b.layers.empty()) throw config_error("block has no layers");
    if (b.downsample != 1 && b.downsample != 2)
      throw config_error("downsample must be 1 or 2");
    for (const auto& l : b.layers) {
      if (l.out_channels < 1) throw config_error("out_channels must be >= 1");
      if (l.kernel % 2 == 0) throw config_error("kernel must be odd");
      if (l.stride < 1) throw config_error("stride must be >= 1");
    }
  }
}

inline void validate_arch(const FcbArch& arch) {
  std::vector<ConvBlockSpec> as_block{{arch.layers, 1}};
  validate_arch(as_block);
}

// The desk-scale extractor: 3 blocks of 2 conv layers each with 2x pooling,
// giving the pyramid at 64^2 / 32^2 / 16^2 for 128^2 inputs.
inline ExtractorArch default_extractor_arch() {
  ExtractorArch arch;
  for (int width : {8, 16, 32}) {
    ConvBlockSpec b;
    b.layers = {{width, 3, 1, true, true}, {width, 3, 1, true, true}};
    b.downsample = 2;
    arch.push_back(b);
  }
  return arch;
}

inline FcbArch default_fcb_arch() {
  FcbArch arch;
  arch.layers = {{32, 3, 1, true, true},
                 {32, 3, 1, true, true},
                 {1, 1, 1, false, false}};
  return arch;
}

inline std::vector<ConvLayerSpec> flatten_layers(
    const std::vector<ConvBlockSpec>& arch) {
  std::vector<ConvLayerSpec> out;
  for (const auto& b : arch)
    for (const auto& l : b.layers) out.push_back(l);
  return out;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <typename T>
struct ConvLayerParams {
  Tensor<T> w;  // (Cout, Cin, k, k)
  Tensor<T> b;  // (Cout)
  bool has_bn = false;
  Tensor<T> gamma, beta, run_mean, run_var;  // (Cout) each when has_bn
};

template <typename T>
struct ParamSet {
  std::vector<ConvLayerParams<T>> layers;

  bool bitwise_equal(const ParamSet& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& a = layers[i];
      const auto& b = o.layers[i];
      if (a.w.v != b.w.v || a.b.v != b.b.v || a.has_bn != b.has_bn)
        return false;
      if (a.has_bn && (a.gamma.v != b.gamma.v || a.beta.v != b.beta.v ||
                       a.run_mean.v != b.run_mean.v ||
                       a.run_var.v != b.run_var.v))
        return false;
    }
    return true;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) {
      ConvLayerParams<U> o;
      o.w = l.w.template cast<U>();
      o.b = l.b.template cast<U>();
      o.has_bn = l.has_bn;
      if (l.has_bn) {
        o.gamma = l.gamma.template cast<U>();
        o.beta = l.beta.template cast<U>();
        o.run_mean = l.run_mean.template cast<U>();
        o.run_var = l.run_var.template cast<U>();
      }
      out.layers.push_back(std::move(o));
    }
    return out;
  }
};

template <typename T>
struct LayerGrads {
  Tensor<T> w, b, gamma, beta;
};

template <typename T>
using ParamGrads = std::vector<LayerGrads<T>>;

template <typename T>
ParamGrads<T> zero_grads(const ParamSet<T>& p) {
  ParamGrads<T> g(p.layers.size());
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    g[i].w = Tensor<T>(p.layers[i].w.shape);
    g[i].b = Tensor<T>(p.layers[i].b.shape);
    if (p.layers[i].has_bn) {
      g[i].gamma = Tensor<T>(p.layers[i].gamma.shape);
      g[i].beta = Tensor<T>(p.layers[i].beta.shape);
    }
  }
  return g;
}

// Deterministic fan-in-scaled initialization; biases zero, BN at identity.
template <typename T>
ParamSet<T> build_network(const std::vector<ConvBlockSpec>& arch,
                          int in_channels, std::uint64_t seed) {
  validate_arch(arch);
  Rng rng(seed);
  ParamSet<T> p;
  int cin = in_channels;
  for (const auto& spec : flatten_layers(arch)) {
    ConvLayerParams<T> l;
    l.w = Tensor<T>({spec.out_channels, cin, spec.kernel, spec.kernel});
    const double std = std::sqrt(2.0 / (cin * spec.kernel * spec.kernel));
    for (auto& x : l.w.v) x = static_cast<T>(rng.normal(0.0, std));
    l.b = Tensor<T>({spec.out_channels});
    l.has_bn = spec.normalization;
    if (l.has_bn) {
      l.gamma = Tensor<T>({spec.out_channels});
      l.gamma.fill(T(1));
      l.beta = Tensor<T>({spec.out_channels});
      l.run_mean = Tensor<T>({spec.out_channels});
      l.run_var = Tensor<T>({spec.out_channels});
      l.run_var.fill(T(1));
    }
    p.layers.push_back(std::move(l));
    cin = spec.out_channels;
  }
  return p;
}

template <typename T>
ParamSet<T> build_network(const FcbArch& arch, int in_channels,
                          std::uint64_t seed) {
  return build_network<T>(std::vector<ConvBlockSpec>{{arch.layers, 1}},
                          in_channels, seed);
}

// ---------------------------------------------------------------------------
// Image batches and pyramids
// ---------------------------------------------------------------------------

inline constexpr int kImageSize = 128;
inline constexpr int kImageChannels = 3;
inline constexpr int kPixelMapSize = 32;

template <typename T>
struct ImageBatch {
  Tensor<T> data;           // (N, 3, 128, 128), values in [0, 1]
  std::vector<int> labels;  // empty, or per-sample {0 genuine, 1 attack}

  int batch_size() const { return data.shape.empty() ? 0 : data.dim(0); }

  void validate() const {
    require(data.shape.size() == 4, "image batch must be 4-D");
    require(data.dim(0) >= 1, "image batch needs N >= 1");
    require(data.dim(1) == kImageChannels, "image batch needs 3 channels");
    require(data.dim(2) == kImageSize && data.dim(3) == kImageSize,
            "images must be 128x128");
    for (const T& x : data.v) {
      if (!std::isfinite(static_cast<double>(x)) || x < T(0) || x > T(1))
        throw contract_error("image values must be finite and in [0,1]");
    }
    require(labels.empty() ||
                labels.size() == static_cast<std::size_t>(data.dim(0)),
            "label count mismatch");
  }
};

template <typename T>
Act<T> act_from_batch(const ImageBatch<T>& batch) {
  const int n = batch.data.dim(0), c = batch.data.dim(1);
  const int h = batch.data.dim(2), w = batch.data.dim(3);
  Act<T> a(n, c, h, w);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < hw; ++i)
        a.v[(static_cast<std::int64_t>(ch) * n + s) * hw + i] =
            batch.data.v[(static_cast<std::int64_t>(s) * c + ch) * hw + i];
  return a;
}

template <typename T>
struct FeaturePyramid {
  Act<T> f1, f2, f3;

  const Act<T>& level(int l) const {
    switch (l) {
      case 0: return f1;
      case 1: return f2;
      default: return f3;
    }
  }
  Act<T>& level(int l) {
    switch (l) {
      case 0: return f1;
      case 1: return f2;
      default: return f3;
    }
  }
};

// Pixel map in (N, 1, 32, 32) layout, values in the open interval (0,1).
template <typename T>
struct PixelMap {
  Tensor<T> d;
};

// ---------------------------------------------------------------------------
// Extractor evaluation with cached state for the exact backward pass
// ---------------------------------------------------------------------------

template <typename T>
struct LayerState {
  ConvCache<T> conv;
  BnCache<T> bn;
  Act<T> out;  // post conv/bn/relu
  bool has_bn = false, has_relu = false;
};

template <typename T>
class ExtractorEval {
 public:
  // training-mode BN updates the running stats inside params
  FeaturePyramid<T> forward(ParamSet<T>& params, const ExtractorArch& arch,
                            const Act<T>& input, bool training) {
    arch_ = &arch;
    const auto specs = flatten_layers(arch);
    require(specs.size() == params.layers.size(),
            "extractor: params/arch layer count mismatch");
    lstates_.assign(specs.size(), LayerState<T>{});
    block_out_.clear();
    prepool_.clear();
    auto* params_mut = &params;
    const Act<T>* x = &input;
    std::size_t li = 0;
    for (const auto& block : arch) {
      for (std::size_t j = 0; j < block.layers.size(); ++j, ++li) {
        const auto& spec = block.layers[j];
        auto& st = lstates_[li];
        auto& lp = params_mut->layers[li];
        st.has_bn = spec.normalization;
        st.has_relu = spec.nonlinearity;
        Act<T> y = conv_forward(*x, lp.w, lp.b, spec.stride, st.conv);
        if (st.has_bn)
          y = bn_forward(y, lp.gamma, lp.beta, lp.run_mean, lp.run_var,
                         training, st.bn);
        if (st.has_relu) relu_inplace(y);
        st.out = std::move(y);
        x = &st.out;
      }
      prepool_.push_back({x->h, x->w});
      block_out_.push_back(block.downsample > 1
                               ? avgpool_forward(*x, block.downsample)
                               : *x);
      x = &block_out_.back();
    }
    require(block_out_.size() == 3, "extractor must produce 3 pyramid levels");
    return {block_out_[0], block_out_[1], block_out_[2]};
  }

  // tap_grads[b] is dLoss/d(block b output); empty Act means no contribution.
  ParamGrads<T> backward(const ParamSet<T>& params,
                         const std::vector<Act<T>>& tap_grads) {
    ParamGrads<T> grads = zero_grads(params);
    const int nblocks = static_cast<int>(arch_->size());
    Act<T> g;  // gradient flowing into the current block output
    std::size_t li = params.layers.size();
    for (int b = nblocks - 1; b >= 0; --b) {
      if (tap_grads[b].numel() > 0) {
        if (g.numel() == 0) {
          g = tap_grads[b];
        } else {
          for (std::size_t i = 0; i < g.v.size(); ++i)
            g.v[i] += tap_grads[b].v[i];
        }
      }
      const auto& block = (*arch_)[b];
      if (block.downsample > 1)
        g = avgpool_backward(g, block.downsample, prepool_[b].first,
                             prepool_[b].second);
      for (int j = static_cast<int>(block.layers.size()) - 1; j >= 0; --j) {
        --li;
        auto& st = lstates_[li];
        const auto& lp = params.layers[li];
        if (st.has_relu) relu_backward_inplace(st.out, g);
        if (st.has_bn)
          g = bn_backward(st.bn, lp.gamma, g, grads[li].gamma, grads[li].beta);
        const bool need_dx = (li != 0);
        Act<T> dx;
        conv_backward(st.conv, lp.w, g, grads[li].w, grads[li].b,
                      need_dx ? &dx : nullptr);
        g = std::move(dx);
      }
    }
    return grads;
  }

 private:
  const ExtractorArch* arch_ = nullptr;
  std::vector<LayerState<T>> lstates_;
  std::vector<Act<T>> block_out_;
  std::vector<std::pair<int, int>> prepool_;
};

// Pure forward pass per the module contract (no cache kept by the caller).
template <typename T>
FeaturePyramid<T> forward_features(const ParamSet<T>& params,
                                   const ExtractorArch& arch,
                                   const ImageBatch<T>& batch,
                                   bool training = false) {
  batch.validate();
  // run on a copy so this stays pure even in training mode
  ParamSet<T> copy = params;
  ExtractorEval<T> ev;
  return ev.forward(copy, arch, act_from_batch(batch), training);
}

// ---------------------------------------------------------------------------
// Final convolutional block: pool f1/f2 to f3's resolution, concat, convs,
// logistic squash, bilinear upsample to 32x32.
// ---------------------------------------------------------------------------

template <typename T>
class FinalBlockEval {
 public:
  Act<T> forward(ParamSet<T>& params, const FcbArch& arch,
                 const FeaturePyramid<T>& pyr, bool training) {
    arch_ = &arch;
    require(params.layers.size() == arch.layers.size(),
            "fcb: params/arch layer count mismatch");
    c1_ = pyr.f1.c;
    c2_ = pyr.f2.c;
    c3_ = pyr.f3.c;
    require(pyr.f1.h % pyr.f3.h == 0 && pyr.f2.h % pyr.f3.h == 0,
            "fcb: pyramid resolutions not nested");
    pool1_ = pyr.f1.h / pyr.f3.h;
    pool2_ = pyr.f2.h / pyr.f3.h;
    dims1_ = {pyr.f1.h, pyr.f1.w};
    dims2_ = {pyr.f2.h, pyr.f2.w};
    Act<T> p1 = avgpool_forward(pyr.f1, pool1_);
    Act<T> p2 = avgpool_forward(pyr.f2, pool2_);
    Act<T> x(pyr.f3.n, c1_ + c2_ + c3_, pyr.f3.h, pyr.f3.w);
    std::copy(p1.v.begin(), p1.v.end(), x.v.begin());
    std::copy(p2.v.begin(), p2.v.end(), x.v.begin() + p1.v.size());
    std::copy(pyr.f3.v.begin(), pyr.f3.v.end(),
              x.v.begin() + p1.v.size() + p2.v.size());
    auto* params_mut = &params;
    lstates_.assign(arch.layers.size(), LayerState<T>{});
    const Act<T>* cur = &x;
    for (std::size_t li = 0; li < arch.layers.size(); ++li) {
      const auto& spec = arch.layers[li];
      auto& st = lstates_[li];
      auto& lp = params_mut->layers[li];
      st.has_bn = spec.normalization;
      st.has_relu = spec.nonlinearity;
      Act<T> y = conv_forward(*cur, lp.w, lp.b, spec.stride, st.conv);
      if (st.has_bn)
        y = bn_forward(y, lp.gamma, lp.beta, lp.run_mean, lp.run_var, training,
                       st.bn);
      if (st.has_relu) relu_inplace(y);
      st.out = std::move(y);
      cur = &st.out;
    }
    require(cur->c == 1, "fcb must end in a 1-channel layer");
    squashed_ = sigmoid_forward(*cur, &clamped_);
    return upsample2x_forward(squashed_);
  }

  // dd is dLoss/d(pixel map). Returns grads for the fcb params and fills
  // tap_grads with dLoss/d(f1,f2,f3).
  ParamGrads<T> backward(const ParamSet<T>& params, const Act<T>& dd,
                         std::vector<Act<T>>& tap_grads) {
    ParamGrads<T> grads = zero_grads(params);
    Act<T> g = upsample2x_backward(dd, squashed_.h, squashed_.w);
    g = sigmoid_backward(squashed_, g, clamped_);
    for (int li = static_cast<int>(arch_->layers.size()) - 1; li >= 0; --li) {
      auto& st = lstates_[li];
      const auto& lp = params.layers[li];
      if (st.has_relu) relu_backward_inplace(st.out, g);
      if (st.has_bn)
        g = bn_backward(st.bn, lp.gamma, g, grads[li].gamma, grads[li].beta);
      Act<T> dx;
      conv_backward(st.conv, lp.w, g, grads[li].w, grads[li].b, &dx);
      g = std::move(dx);
    }
    // split the concat, undo the pooling
    const int n = g.n, fh = g.h, fw = g.w;
    Act<T> g1(n, c1_, fh, fw), g2(n, c2_, fh, fw), g3(n, c3_, fh, fw);
    std::copy(g.v.begin(), g.v.begin() + g1.v.size(), g1.v.begin());
    std::copy(g.v.begin() + g1.v.size(),
              g.v.begin() + g1.v.size() + g2.v.size(), g2.v.begin());
    std::copy(g.v.begin() + g1.v.size() + g2.v.size(), g.v.end(),
              g3.v.begin());
    tap_grads.assign(3, Act<T>{});
    tap_grads[0] = avgpool_backward(g1, pool1_, dims1_.first, dims1_.second);
    tap_grads[1] = avgpool_backward(g2, pool2_, dims2_.first, dims2_.second);
    tap_grads[2] = std::move(g3);
    return grads;
  }

 private:
  const FcbArch* arch_ = nullptr;
  std::vector<LayerState<T>> lstates_;
  Act<T> squashed_;
  std::vector<bool> clamped_;
  int c1_ = 0, c2_ = 0, c3_ = 0, pool1_ = 1, pool2_ = 1;
  std::pair<int, int> dims1_, dims2_;
};

// Pixel-map forward per the module contract.
template <typename T>
PixelMap<T> forward_pixel_map(const ParamSet<T>& fcb_params,
                              const FcbArch& arch,
                              const FeaturePyramid<T>& pyr,
                              bool training = false) {
  FinalBlockEval<T> ev;
  ParamSet<T> copy = fcb_params;
  Act<T> d = ev.forward(copy, arch, pyr, training);
  PixelMap<T> out;
  out.d = Tensor<T>({d.n, 1, d.h, d.w});
  std::copy(d.v.begin(), d.v.end(), out.d.v.begin());
  return out;
}

}  // namespace ockd
