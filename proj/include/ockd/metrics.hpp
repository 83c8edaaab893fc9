#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ockd/common.hpp"
#include "ockd/data.hpp"

namespace ockd {

// Scores follow the attack-high orientation: a sample with score >= delta is
// classified attack.
struct ScoredSample {
  double score = 0;
  int label = kGenuine;
};

using LabeledScores = std::vector<ScoredSample>;

struct RocPoint {
  double fdr = 0;  // genuine rejected (false detections)
  double tdr = 0;  // attacks detected
};

struct EvalReport {
  double threshold = 0;
  double far = 0, frr = 0, hter = 0;
  double apcer = 0, bpcer = 0, acer = 0;
  double auc = 0;
  std::vector<RocPoint> roc;
};

namespace detail {
inline void check_both_classes(const LabeledScores& scores) {
  if (scores.empty()) throw metric_error("no scores");
  bool g = false, a = false;
  for (const auto& s : scores) {
    g |= (s.label == kGenuine);
    a |= (s.label == kAttack);
  }
  if (!g || !a) throw metric_error("both classes required");
}
}  // namespace detail

// FAR: attacks accepted as genuine (score < delta); FRR: genuine rejected.
inline std::pair<double, double> rates_at(const LabeledScores& scores,
                                          double delta) {
  detail::check_both_classes(scores);
  std::int64_t attacks = 0, genuine = 0, fa = 0, fr = 0;
  for (const auto& s : scores) {
    if (s.label == kAttack) {
      ++attacks;
      if (s.score < delta) ++fa;
    } else {
      ++genuine;
      if (s.score >= delta) ++fr;
    }
  }
  return {static_cast<double>(fa) / attacks, static_cast<double>(fr) / genuine};
}

inline double hter(const LabeledScores& scores, double delta) {
  auto [far, frr] = rates_at(scores, delta);
  return 0.5 * (far + frr);
}

// With threshold-at-boundary decisions APCER equals FAR and BPCER equals FRR.
inline double acer(const LabeledScores& scores, double delta) {
  return hter(scores, delta);
}

// Probability a random attack outscores a random genuine, ties at 0.5.
inline double auc(const LabeledScores& scores) {
  detail::check_both_classes(scores);
  std::vector<double> g, a;
  for (const auto& s : scores)
    (s.label == kAttack ? a : g).push_back(s.score);
  std::sort(g.begin(), g.end());
  double wins = 0;
  for (double x : a) {
    const auto lo = std::lower_bound(g.begin(), g.end(), x) - g.begin();
    const auto hi = std::upper_bound(g.begin(), g.end(), x) - g.begin();
    wins += static_cast<double>(lo) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(g.size()) * static_cast<double>(a.size()));
}

namespace detail {
// candidate thresholds: below-min and above-max sentinels plus midpoints of
// adjacent distinct scores
inline std::vector<double> threshold_candidates(const LabeledScores& scores) {
  std::vector<double> v;
  v.reserve(scores.size());
  for (const auto& s : scores) v.push_back(s.score);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> cand;
  cand.push_back(v.front() - 1.0);
  for (std::size_t i = 0; i + 1 < v.size(); ++i)
    cand.push_back(0.5 * (v[i] + v[i + 1]));
  cand.push_back(v.back() + 1.0);
  return cand;
}
}  // namespace detail

// delta minimizing HTER over the candidate set; ties go to the smallest.
inline double select_threshold_optimal(const LabeledScores& scores) {
  detail::check_both_classes(scores);
  double best_delta = 0, best = std::numeric_limits<double>::infinity();
  for (double d : detail::threshold_candidates(scores)) {
    const double h = hter(scores, d);
    if (h < best) {
      best = h;
      best_delta = d;
    }
  }
  return best_delta;
}

// Smallest delta with FRR <= target on a genuine-only validation set.
inline double select_threshold_frr(const std::vector<double>& genuine_scores,
                                   double target_frr = 0.10) {
  if (genuine_scores.empty())
    throw metric_error("empty genuine validation scores");
  std::vector<double> v = genuine_scores;
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  const auto allowed = static_cast<std::int64_t>(
      std::floor(target_frr * n + 1e-12));
  // walk distinct values ascending; count(>= delta) must not exceed allowed
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0 && v[i] == v[i - 1]) continue;
    const auto at_or_above = static_cast<std::int64_t>(v.size() - i);
    if (at_or_above <= allowed) return v[i];
  }
  return std::nextafter(v.back(), std::numeric_limits<double>::infinity());
}

// One point per distinct threshold, swept from strictest to loosest;
// monotone in both coordinates with endpoints (0,0) and (1,1).
inline std::vector<RocPoint> roc(const LabeledScores& scores) {
  detail::check_both_classes(scores);
  std::vector<ScoredSample> sorted = scores;
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) {
              return a.score > b.score;
            });
  double n_gen = 0, n_atk = 0;
  for (const auto& s : scores) (s.label == kAttack ? n_atk : n_gen) += 1;
  std::vector<RocPoint> out{{0.0, 0.0}};
  double fr = 0, tp = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double v = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == v) {
      if (sorted[i].label == kAttack)
        tp += 1;
      else
        fr += 1;
      ++i;
    }
    out.push_back({fr / n_gen, tp / n_atk});
  }
  return out;
}

inline double roc_area(const std::vector<RocPoint>& curve) {
  double area = 0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += 0.5 * (curve[i].tdr + curve[i - 1].tdr) *
            (curve[i].fdr - curve[i - 1].fdr);
  return area;
}

inline EvalReport evaluate(const LabeledScores& scores, double delta) {
  EvalReport r;
  r.threshold = delta;
  auto [far, frr] = rates_at(scores, delta);
  r.far = far;
  r.frr = frr;
  r.hter = 0.5 * (far + frr);
  r.apcer = far;
  r.bpcer = frr;
  r.acer = 0.5 * (r.apcer + r.bpcer);
  r.auc = auc(scores);
  r.roc = roc(scores);
  return r;
}

}  // namespace ockd
