#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ockd/data.hpp"
#include "ockd/losses.hpp"
#include "ockd/net.hpp"
#include "ockd/optim.hpp"
#include "ockd/rng.hpp"
#include "ockd/sparse.hpp"

namespace ockd {

struct TeacherTrainConfig {
  double lr = 1e-4;
  int batch = 30;
  int iters = 8400;
  std::uint64_t seed = 0;

  void validate() const {
    if (lr <= 0) throw config_error("teacher learning rate must be > 0");
    if (batch < 1) throw config_error("teacher batch size must be >= 1");
    if (iters < 0) throw config_error("teacher iteration count must be >= 0");
  }
};

struct StudentTrainConfig {
  double lr = 1e-4;
  int batch = 25;
  int iters = 1500;
  double density = 0.10;
  int period = 60;       // T
  double rate0 = 0.5;    // r0
  DistillWeights lambda;
  std::uint64_t seed = 0;

  void validate() const {
    if (lr <= 0) throw config_error("student learning rate must be > 0");
    if (batch < 1) throw config_error("student batch size must be >= 1");
    if (iters < 0) throw config_error("student iteration count must be >= 0");
    if (density <= 0 || density > 1)
      throw config_error("density must be in (0, 1]");
    if (period < 1) throw config_error("regrowth period must be >= 1");
    if (rate0 <= 0 || rate0 >= 1)
      throw config_error("initial regrowth rate must be in (0, 1)");
    lambda.validate();
  }
};

// r0 defaults from the density regime: 0.5 at 10% density, 0.2 at 1%.
inline double default_regrowth_rate(double density) {
  return density >= 0.05 ? 0.5 : 0.2;
}

template <typename T>
struct TeacherResult {
  ParamSet<T> extractor;
  ParamSet<T> final_block;
  std::vector<double> loss_trace;
};

template <typename T>
struct StudentResult {
  ParamSet<T> params;
  SparsityMask mask;
  std::vector<double> loss_trace;
};

// Pixel-supervised training of the teacher extractor and its final block.
template <typename T>
TeacherResult<T> train_teacher(const Dataset<T>& source,
                               const ExtractorArch& arch,
                               const FcbArch& fcb_arch,
                               const TeacherTrainConfig& cfg) {
  cfg.validate();
  bool has_genuine = false, has_attack = false;
  for (const auto& s : source) {
    has_genuine |= (s.label == kGenuine);
    has_attack |= (s.label == kAttack);
  }
  if (!has_genuine || !has_attack)
    throw config_error("teacher training needs both classes in the source");
  if (static_cast<int>(source.size()) < cfg.batch)
    throw config_error("source dataset smaller than the batch size");

  TeacherResult<T> res;
  res.extractor = build_network<T>(arch, kImageChannels, cfg.seed);
  int pyramid_channels = 0;
  for (const auto& b : arch) pyramid_channels += b.layers.back().out_channels;
  res.final_block =
      build_network<T>(fcb_arch, pyramid_channels, Rng::mix(cfg.seed, 1));

  auto ext_opt = AdamState<T>::init(res.extractor);
  auto fcb_opt = AdamState<T>::init(res.final_block);
  Rng sampler(Rng::mix(cfg.seed, 2));

  for (int k = 1; k <= cfg.iters; ++k) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch));
    for (auto& i : idx)
      i = static_cast<std::size_t>(sampler.uniform_int(source.size()));
    auto batch = make_batch(source, idx);
    const Act<T> input = act_from_batch(batch);

    ExtractorEval<T> ev;
    FinalBlockEval<T> fb;
    auto pyr = ev.forward(res.extractor, arch, input, true);
    auto d = fb.forward(res.final_block, fcb_arch, pyr, true);
    res.loss_trace.push_back(pixel_bce(d, batch.labels));

    auto dd = pixel_bce_backward(d, batch.labels);
    std::vector<Act<T>> taps;
    auto fcb_grads = fb.backward(res.final_block, dd, taps);
    auto ext_grads = ev.backward(res.extractor, taps);
    ext_opt.step(res.extractor, ext_grads, cfg.lr);
    fcb_opt.step(res.final_block, fcb_grads, cfg.lr);
  }
  return res;
}

// Invoked right after each completed regrowth cycle.
template <typename T>
using RegrowthCallback = std::function<void(
    int iter, const ParamSet<T>&, const SparsityMask&, const AdamState<T>&)>;

// Sparse distillation of the student against a frozen teacher. The teacher
// pyramid of each training sample is cached after its first evaluation.
template <typename T>
StudentResult<T> train_student(const Dataset<T>& target_genuine,
                               const ParamSet<T>& teacher,
                               const ExtractorArch& arch,
                               const StudentTrainConfig& cfg,
                               const RegrowthCallback<T>& on_regrowth = {}) {
  cfg.validate();
  for (const auto& s : target_genuine)
    if (s.label != kGenuine)
      throw protocol_error("student training data must be genuine-only");
  if (target_genuine.empty())
    throw config_error("student training data is empty");

  StudentResult<T> res;
  res.params = build_network<T>(arch, kImageChannels, cfg.seed);
  res.mask = init_masks(res.params, cfg.density);
  auto opt = AdamState<T>::init(res.params);
  Rng sampler(Rng::mix(cfg.seed, 3));

  ParamSet<T> frozen = teacher;  // eval-mode forward never mutates it
  std::vector<std::optional<FeaturePyramid<T>>> cache(target_genuine.size());

  for (int k = 1; k <= cfg.iters; ++k) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch));
    for (auto& i : idx)
      i = static_cast<std::size_t>(sampler.uniform_int(target_genuine.size()));

    // teacher pyramid assembled from per-sample cached features
    for (std::size_t i : idx) {
      if (!cache[i]) {
        auto b = make_batch(target_genuine, {i});
        ExtractorEval<T> tev;
        cache[i] = tev.forward(frozen, arch, act_from_batch(b), false);
      }
    }
    FeaturePyramid<T> tpyr;
    for (int l = 0; l < 3; ++l) {
      const auto& proto = cache[idx[0]]->level(l);
      Act<T>& dst = tpyr.level(l);
      dst = Act<T>(static_cast<int>(idx.size()), proto.c, proto.h, proto.w);
      const std::int64_t hw = static_cast<std::int64_t>(proto.h) * proto.w;
      for (std::size_t bi = 0; bi < idx.size(); ++bi) {
        const auto& src = cache[idx[bi]]->level(l);
        for (int c = 0; c < proto.c; ++c)
          std::copy_n(src.row(c), hw,
                      dst.row(c) + static_cast<std::int64_t>(bi) * hw);
      }
    }

    auto batch = make_batch(target_genuine, idx);
    ExtractorEval<T> sev;
    auto spyr = sev.forward(res.params, arch, act_from_batch(batch), true);
    res.loss_trace.push_back(distill_loss(tpyr, spyr, cfg.lambda));

    auto taps = distill_loss_backward(tpyr, spyr, cfg.lambda);
    auto grads = sev.backward(res.params, taps);
    opt.step(res.params, grads, cfg.lr, &res.mask);

    const double r = cosine_decay(cfg.rate0, k, cfg.iters);
    if (k % cfg.period == 0) {
      regrowth_cycle(res.params, res.mask, opt, r);
      if (on_regrowth) on_regrowth(k, res.params, res.mask, opt);
    }
  }
  apply_masks(res.params, res.mask);
  return res;
}

}  // namespace ockd
