#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ockd/inference.hpp"
#include "ockd/train.hpp"
#include "test_helpers.hpp"

using namespace ockd;
using namespace ockd_test;

TEST_CASE("identical teacher and student score (numerically) zero") {
  auto arch = tiny_extractor_arch();
  auto net = build_network<float>(arch, kImageChannels, 42);
  auto batch = random_batch<float>(3, 9);
  auto xi = score(net, net, arch, batch);
  REQUIRE(xi.size() == 3);
  // not exactly zero: 1 - dot/sqrt(na2*nb2) rounds at the last ulp
  for (double x : xi) CHECK(std::abs(x) < 1e-9);
}

TEST_CASE("scores are bounded and per-sample") {
  auto arch = tiny_extractor_arch();
  auto a = build_network<float>(arch, kImageChannels, 1);
  auto b = build_network<float>(arch, kImageChannels, 2);
  auto batch = random_batch<float>(4, 10);
  auto xi = score(a, b, arch, batch);
  REQUIRE(xi.size() == 4);
  for (double x : xi) {
    CHECK(x >= 0.0);
    CHECK(x <= 2.0);
  }
  // scoring a sub-batch reproduces the per-sample values
  ImageBatch<float> one;
  one.data = Tensor<float>({1, kImageChannels, kImageSize, kImageSize});
  const std::int64_t chw =
      static_cast<std::int64_t>(kImageChannels) * kImageSize * kImageSize;
  std::copy_n(batch.data.v.begin() + 2 * chw, chw, one.data.v.begin());
  auto xi_one = score(a, b, arch, one);
  CHECK(xi_one[0] == doctest::Approx(xi[2]).epsilon(1e-5));
}

TEST_CASE("score equals the mean of the level distances") {
  auto arch = tiny_extractor_arch();
  auto a = build_network<float>(arch, kImageChannels, 3);
  auto b = build_network<float>(arch, kImageChannels, 4);
  auto batch = random_batch<float>(2, 11);
  auto tp = forward_features(a, arch, batch, false);
  auto sp = forward_features(b, arch, batch, false);
  std::vector<double> manual(2, 0.0);
  for (int l = 0; l < 3; ++l) {
    auto d = level_distances(tp.level(l), sp.level(l));
    for (int i = 0; i < 2; ++i) manual[static_cast<std::size_t>(i)] += d[i];
  }
  auto xi = score(a, b, arch, batch);
  for (int i = 0; i < 2; ++i)
    CHECK(xi[static_cast<std::size_t>(i)] ==
          doctest::Approx(manual[static_cast<std::size_t>(i)] / 3.0)
              .epsilon(1e-12));
}

TEST_CASE("classification boundary goes to attack") {
  DecisionRule rule{0.5};
  CHECK(classify(0.49, rule) == kGenuine);
  CHECK(classify(0.5, rule) == kAttack);
  CHECK(classify(0.51, rule) == kAttack);
}

TEST_CASE("scoring does not mutate either network") {
  auto arch = tiny_extractor_arch();
  auto a = build_network<float>(arch, kImageChannels, 5);
  auto b = build_network<float>(arch, kImageChannels, 6);
  auto a0 = a;
  auto b0 = b;
  auto batch = random_batch<float>(2, 12);
  (void)score(a, b, arch, batch);
  CHECK(a.bitwise_equal(a0));
  CHECK(b.bitwise_equal(b0));
}

TEST_CASE("dt baseline is the mean pixel map in (0, 1)") {
  auto arch = tiny_extractor_arch();
  auto fcb = tiny_fcb_arch();
  auto ext = build_network<float>(arch, kImageChannels, 7);
  int pyr_ch = 0;
  for (const auto& blk : arch) pyr_ch += blk.layers.back().out_channels;
  auto fb = build_network<float>(fcb, pyr_ch, 8);
  auto batch = random_batch<float>(3, 13);
  auto s = dt_baseline_score(ext, fb, arch, fcb, batch);
  REQUIRE(s.size() == 3);
  for (double x : s) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
  auto s2 = dt_baseline_score(ext, fb, arch, fcb, batch);
  CHECK(s == s2);
}

TEST_CASE("trained student scores genuine-like inputs below shifted ones") {
  auto arch = tiny_extractor_arch();
  Rng rng(21);
  Dataset<float> data;
  for (int i = 0; i < 10; ++i) {
    Sample<float> s;
    s.image = Tensor<float>({kImageChannels, kImageSize, kImageSize});
    for (auto& v : s.image.v) v = static_cast<float>(rng.uniform());
    s.label = i < 6 ? kGenuine : kAttack;
    s.id = static_cast<std::uint64_t>(i);
    data.push_back(std::move(s));
  }
  TeacherTrainConfig tc;
  tc.iters = 4;
  tc.batch = 4;
  tc.seed = 1;
  auto teacher = train_teacher(data, arch, tiny_fcb_arch(), tc);

  auto genuine = filter(data, Split::train, kGenuine);
  StudentTrainConfig sc;
  sc.iters = 40;
  sc.batch = 4;
  sc.density = 0.5;
  sc.period = 10;
  sc.seed = 2;
  sc.lr = 3e-3;
  auto student = train_student(genuine, teacher.extractor, arch, sc);

  // the student imitates the teacher on its training frames, so those score
  // lower than strongly perturbed versions of the same frames
  auto train_batch = make_batch(genuine, {0, 1, 2, 3});
  auto shifted = train_batch;
  Rng noise(33);
  for (auto& v : shifted.data.v) {
    double x = 1.0 - 0.7 * v + 0.3 * noise.uniform();
    v = static_cast<float>(std::clamp(x, 0.0, 1.0));
  }
  auto xi_train = score(teacher.extractor, student.params, arch, train_batch);
  auto xi_shift = score(teacher.extractor, student.params, arch, shifted);
  double m_train = 0, m_shift = 0;
  for (double x : xi_train) m_train += x / 4;
  for (double x : xi_shift) m_shift += x / 4;
  CHECK(m_train < m_shift);
}
