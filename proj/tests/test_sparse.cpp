#include "doctest.h"

#include <cmath>
#include <set>

#include "ockd/sparse.hpp"
#include "test_helpers.hpp"

using namespace ockd;
using namespace ockd_test;

namespace {

// single dense conv layer with the given weights, for mask unit tests
ParamSet<float> layer_with_weights(const std::vector<float>& w) {
  ParamSet<float> p;
  ConvLayerParams<float> l;
  l.w = Tensor<float>({1, 1, 1, static_cast<int>(w.size())});
  l.w.v = w;
  l.b = Tensor<float>({1});
  p.layers.push_back(std::move(l));
  return p;
}

}  // namespace

TEST_CASE("init_masks cardinality and zeroing") {
  std::vector<float> w(100);
  Rng rng(1);
  for (auto& x : w) x = static_cast<float>(rng.normal());
  auto p = layer_with_weights(w);
  auto mask = init_masks(p, 0.10);
  CHECK(mask.layers[0].active_count == 10);
  CHECK(mask.layers[0].inactive_indices().size() == 90);
  int zeros = 0;
  for (std::uint32_t i = 0; i < 100; ++i) {
    if (!mask.layers[0].active[i]) {
      CHECK(p.layers[0].w[i] == 0.0f);
      ++zeros;
    }
  }
  CHECK(zeros == 90);
}

TEST_CASE("init_masks full density keeps everything") {
  auto p = layer_with_weights({0.1f, -0.2f, 0.3f});
  auto mask = init_masks(p, 1.0);
  CHECK(mask.layers[0].active_count == 3);
  CHECK(mask.layers[0].inactive_indices().empty());
}

TEST_CASE("init_masks selects top-|v| indicators") {
  auto p = layer_with_weights({0.5f, -0.9f, 0.1f, 0.0f});
  auto mask = init_masks(p, 0.5);
  CHECK(mask.layers[0].active[0]);
  CHECK(mask.layers[0].active[1]);
  CHECK(!mask.layers[0].active[2]);
  CHECK(!mask.layers[0].active[3]);
}

TEST_CASE("init_masks rejects bad densities") {
  auto p = layer_with_weights({1.0f});
  CHECK_THROWS_AS(init_masks(p, 0.0), config_error);
  CHECK_THROWS_AS(init_masks(p, 1.5), config_error);
}

TEST_CASE("apply_masks zeroes inactive entries and is idempotent") {
  auto p = layer_with_weights({1.0f, 1.0f, 1.0f, 1.0f});
  auto mask = init_masks(p, 1.0);
  mask.layers[0].active = {1, 0, 1, 0};
  mask.layers[0].active_count = 2;
  apply_masks(p, mask);
  CHECK(p.layers[0].w.v == std::vector<float>({1.0f, 0.0f, 1.0f, 0.0f}));
  auto once = p.layers[0].w.v;
  apply_masks(p, mask);
  CHECK(p.layers[0].w.v == once);
}

TEST_CASE("prune_set picks smallest active magnitudes") {
  auto p = layer_with_weights({0.5f, 0.4f, 0.01f, 0.02f});
  auto mask = init_masks(p, 1.0);
  auto pr = prune_set(p, mask, 0.5);
  CHECK(pr[0] == std::vector<std::uint32_t>({2, 3}));
  CHECK(prune_set(p, mask, 0.0)[0].empty());
}

TEST_CASE("prune_set tie-break is ascending index") {
  auto p = layer_with_weights({0.3f, 0.3f, 0.3f, 0.3f});
  auto mask = init_masks(p, 1.0);
  auto pr = prune_set(p, mask, 0.25);
  CHECK(pr[0] == std::vector<std::uint32_t>({0}));
}

TEST_CASE("growth_score formula and guards") {
  auto p = layer_with_weights({0.0f, 0.0f, 0.0f});
  auto moments = AdamState<float>::init(p);
  moments.p[0].w.v = {0.1f, 0.0f, 1.0f};
  moments.q[0].w.v = {0.04f, 0.5f, 0.0f};
  auto mu = growth_score(moments);
  CHECK(mu[0][0] == doctest::Approx(0.1 / (0.2 + 1e-8)).epsilon(1e-6));
  CHECK(mu[0][1] == 0.0f);
  CHECK(mu[0][2] == doctest::Approx(1e8).epsilon(1e-4));
  moments.p[0].w.v[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(growth_score(moments), numeric_error);
}

TEST_CASE("grow_set picks largest |mu| among inactive") {
  auto p = layer_with_weights({1.f, 1.f, 0.f, 0.f, 0.f});
  auto mask = init_masks(p, 0.4);  // indices 0,1 active
  std::vector<Tensor<float>> mu(1);
  mu[0] = Tensor<float>({1, 1, 1, 5});
  mu[0].v = {9.f, 9.f, 3.f, 1.f, 2.f};
  auto g = grow_set(mu, mask, {1});
  CHECK(g[0] == std::vector<std::uint32_t>({2}));
  CHECK(grow_set(mu, mask, {0})[0].empty());
  CHECK_THROWS_AS(grow_set(mu, mask, {4}), contract_error);
}

TEST_CASE("grow_set tie-break is ascending index") {
  auto p = layer_with_weights({1.f, 0.f, 0.f, 0.f, 1.f});
  auto mask = init_masks(p, 0.4);
  std::vector<Tensor<float>> mu(1);
  mu[0] = Tensor<float>({1, 1, 1, 5});
  mu[0].v = {0.f, 2.f, 2.f, 2.f, 0.f};
  auto g = grow_set(mu, mask, {2});
  CHECK(g[0] == std::vector<std::uint32_t>({1, 2}));
}

TEST_CASE("regrowth_cycle conserves density and keeps P, G disjoint") {
  std::vector<float> w(10);
  Rng rng(7);
  for (auto& x : w) x = static_cast<float>(rng.normal());
  auto p = layer_with_weights(w);
  auto mask = init_masks(p, 0.4);  // |A| = 4
  auto moments = AdamState<float>::init(p);
  for (std::int64_t i = 0; i < 10; ++i) {
    moments.p[0].w[i] = static_cast<float>(rng.normal());
    moments.q[0].w[i] = static_cast<float>(rng.uniform());
  }
  auto before_active = mask.layers[0].active_indices();
  auto pruned = prune_set(p, mask, 0.5);
  CHECK(pruned[0].size() == 2);
  regrowth_cycle(p, mask, moments, 0.5);
  CHECK(mask.layers[0].active_count == 4);
  CHECK(mask.partition_holds());
  auto after_active = mask.layers[0].active_indices();
  // grown entries start at zero with reset moments
  std::set<std::uint32_t> was(before_active.begin(), before_active.end());
  for (std::uint32_t i : after_active) {
    if (!was.count(i)) {
      CHECK(p.layers[0].w[i] == 0.0f);
      CHECK(moments.p[0].w[i] == 0.0f);
      CHECK(moments.q[0].w[i] == 0.0f);
    }
  }
  // pruned and grown sets are disjoint
  for (std::uint32_t i : pruned[0]) {
    CHECK(!mask.layers[0].active[i]);
    CHECK(p.layers[0].w[i] == 0.0f);
  }
}

TEST_CASE("regrowth_cycle with rate 0 is a no-op") {
  auto p = layer_with_weights({0.5f, -0.4f, 0.3f, 0.2f});
  auto mask = init_masks(p, 0.5);
  auto before = p.layers[0].w.v;
  auto before_mask = mask.layers[0].active;
  auto moments = AdamState<float>::init(p);
  regrowth_cycle(p, mask, moments, 0.0);
  CHECK(p.layers[0].w.v == before);
  CHECK(mask.layers[0].active == before_mask);
}

TEST_CASE("cosine_decay endpoints and midpoint") {
  CHECK(cosine_decay(0.5, 0, 100) == doctest::Approx(0.5));
  CHECK(cosine_decay(0.5, 100, 100) == doctest::Approx(0.0));
  CHECK(cosine_decay(0.5, 50, 100) == doctest::Approx(0.25));
  CHECK_THROWS_AS(cosine_decay(0.5, 0, 0), config_error);
  // monotone nonincreasing
  double prev = 1e9;
  for (int k = 0; k <= 100; ++k) {
    double r = cosine_decay(0.3, k, 100);
    CHECK(r <= prev + 1e-15);
    prev = r;
  }
}

TEST_CASE("second moments stay nonnegative under updates") {
  auto p = layer_with_weights({0.1f, -0.2f, 0.3f});
  auto moments = AdamState<float>::init(p);
  auto grads = zero_grads(p);
  Rng rng(9);
  for (int it = 0; it < 50; ++it) {
    for (auto& g : grads[0].w.v) g = static_cast<float>(rng.normal());
    moments.step(p, grads, 1e-3);
    for (float q : moments.q[0].w.v) CHECK(q >= 0.0f);
  }
}

TEST_CASE("regrowth config validation") {
  RegrowthConfig ok{60, 0.5, 1500};
  CHECK_NOTHROW(ok.validate());
  CHECK_THROWS_AS((RegrowthConfig{0, 0.5, 100}).validate(), config_error);
  CHECK_THROWS_AS((RegrowthConfig{200, 0.5, 100}).validate(), config_error);
  CHECK_THROWS_AS((RegrowthConfig{10, 1.5, 100}).validate(), config_error);
}

TEST_CASE("regrowth at full density is a no-op") {
  auto arch = tiny_extractor_arch();
  auto net = build_network<float>(arch, 3, 4);
  auto mask = init_masks(net, 1.0);
  auto opt = AdamState<float>::init(net);
  auto before = net;
  regrowth_cycle(net, mask, opt, 0.5);
  CHECK(net.bitwise_equal(before));
  CHECK(mask.partition_holds());
  for (const auto& l : mask.layers) CHECK(l.active_count == l.size());
}

TEST_CASE("prune count is capped by the growable candidate pool") {
  auto arch = tiny_extractor_arch();
  auto net = build_network<float>(arch, 3, 4);
  auto mask = init_masks(net, 0.9);  // |B| is small
  auto opt = AdamState<float>::init(net);
  std::vector<std::uint32_t> before_counts;
  for (const auto& l : mask.layers) before_counts.push_back(l.active_count);
  regrowth_cycle(net, mask, opt, 0.5);  // |A|*0.5 exceeds |B| everywhere
  CHECK(mask.partition_holds());
  for (std::size_t i = 0; i < mask.layers.size(); ++i)
    CHECK(mask.layers[i].active_count == before_counts[i]);
}
