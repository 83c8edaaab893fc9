#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "ockd/inference.hpp"
#include "ockd/metrics.hpp"
#include "ockd/synth.hpp"
#include "ockd/train.hpp"

namespace ockd {

enum class ThresholdScheme { ideal, challenging };

inline ThresholdScheme parse_threshold_scheme(const std::string& s) {
  if (s == "ideal") return ThresholdScheme::ideal;
  if (s == "challenging") return ThresholdScheme::challenging;
  throw config_error("unknown threshold scheme: " + s);
}

struct ProtocolConfig {
  DomainSpec source;
  DomainSpec target;
  TeacherTrainConfig teacher;
  StudentTrainConfig student;
  ThresholdScheme scheme = ThresholdScheme::ideal;
  int clients = 5;  // client-specific mode only

  void validate_general() const {
    source.validate();
    target.validate();
    teacher.validate();
    student.validate();
    if (scheme == ThresholdScheme::challenging && target.validation.genuine < 1)
      throw config_error(
          "challenging scheme needs a genuine validation split in the target");
  }
  void validate_client_specific() const {
    validate_general();
    if (clients < 2)
      throw config_error("client-specific mode needs at least 2 clients");
  }
};

// One scored/thresholded method (ours or DT baseline) on a test set.
struct MethodResult {
  LabeledScores scores;  // target test, attack-high
  EvalReport report;
};

template <typename T>
struct OcdaResult {
  TeacherResult<T> teacher;
  StudentResult<T> student;
  MethodResult ours;
  MethodResult baseline;
};

namespace detail {

inline void check_split_hygiene(const std::set<std::uint64_t>& trained_on,
                                const std::set<std::uint64_t>& test_ids) {
  for (std::uint64_t id : test_ids)
    if (trained_on.count(id))
      throw protocol_error("test sample seen during training (id " +
                           std::to_string(id) + ")");
}

template <typename T>
std::set<std::uint64_t> ids_of(const Dataset<T>& d) {
  std::set<std::uint64_t> s;
  for (const auto& x : d) s.insert(x.id);
  return s;
}

template <typename T>
std::vector<std::size_t> all_indices(const Dataset<T>& d) {
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

// score a dataset in fixed-size chunks to bound the activation footprint
template <typename T, typename ScoreFn>
LabeledScores score_dataset(const Dataset<T>& data, ScoreFn&& fn,
                            int chunk = 25) {
  LabeledScores out;
  for (std::size_t beg = 0; beg < data.size();
       beg += static_cast<std::size_t>(chunk)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = beg;
         i < data.size() && i < beg + static_cast<std::size_t>(chunk); ++i)
      idx.push_back(i);
    auto batch = make_batch(data, idx);
    auto xi = fn(batch);
    for (std::size_t i = 0; i < idx.size(); ++i)
      out.push_back({xi[i], data[idx[i]].label});
  }
  return out;
}

inline double pick_threshold(ThresholdScheme scheme,
                             const LabeledScores& test_scores,
                             const std::vector<double>& validation_genuine) {
  if (scheme == ThresholdScheme::ideal)
    return select_threshold_optimal(test_scores);
  return select_threshold_frr(validation_genuine, 0.10);
}

}  // namespace detail

// General OCDA: teacher on the full source train split, student on the
// target-train genuine frames, evaluation on the target test split.
template <typename T>
OcdaResult<T> run_ocda(const ProtocolConfig& cfg) {
  cfg.validate_general();
  if (cfg.target.train.attack > 0)
    throw protocol_error("target train split must be genuine-only");

  auto source = generate_domain<T>(cfg.source);
  auto target = generate_domain<T>(cfg.target);

  auto source_train = filter(source, Split::train);
  auto target_train = filter(target, Split::train, kGenuine);
  auto target_val = filter(target, Split::validation, kGenuine);
  auto target_test = filter(target, Split::test);
  for (const auto& s : target_train)
    if (s.label != kGenuine)
      throw protocol_error("attack sample in the one-class training stream");

  std::set<std::uint64_t> trained_on;
  for (const auto& s : source_train) trained_on.insert(s.id);
  for (const auto& s : target_train) trained_on.insert(s.id);
  detail::check_split_hygiene(trained_on, detail::ids_of(target_test));

  const auto arch = default_extractor_arch();
  const auto fcb = default_fcb_arch();

  OcdaResult<T> res;
  res.teacher = train_teacher(source_train, arch, fcb, cfg.teacher);
  res.student = train_student(target_train, res.teacher.extractor, arch,
                              cfg.student);

  res.ours.scores = detail::score_dataset(target_test, [&](const auto& b) {
    return score(res.teacher.extractor, res.student.params, arch, b);
  });
  res.baseline.scores = detail::score_dataset(target_test, [&](const auto& b) {
    return dt_baseline_score(res.teacher.extractor, res.teacher.final_block,
                             arch, fcb, b);
  });

  std::vector<double> val_ours, val_base;
  if (cfg.scheme == ThresholdScheme::challenging) {
    auto vo = detail::score_dataset(target_val, [&](const auto& b) {
      return score(res.teacher.extractor, res.student.params, arch, b);
    });
    auto vb = detail::score_dataset(target_val, [&](const auto& b) {
      return dt_baseline_score(res.teacher.extractor, res.teacher.final_block,
                               arch, fcb, b);
    });
    for (const auto& s : vo) val_ours.push_back(s.score);
    for (const auto& s : vb) val_base.push_back(s.score);
  }
  res.ours.report = evaluate(
      res.ours.scores,
      detail::pick_threshold(cfg.scheme, res.ours.scores, val_ours));
  res.baseline.report = evaluate(
      res.baseline.scores,
      detail::pick_threshold(cfg.scheme, res.baseline.scores, val_base));
  return res;
}

template <typename T>
struct ClientResult {
  int client = -1;
  StudentResult<T> student;
  MethodResult ours;
  MethodResult baseline;
};

struct Aggregate {
  double mean = 0, stddev = 0;
};

inline Aggregate aggregate(const std::vector<double>& xs) {
  if (xs.empty()) throw metric_error("nothing to aggregate");
  Aggregate a;
  for (double x : xs) a.mean += x;
  a.mean /= static_cast<double>(xs.size());
  double acc = 0;
  for (double x : xs) acc += (x - a.mean) * (x - a.mean);
  a.stddev = std::sqrt(acc / static_cast<double>(xs.size()));
  return a;
}

template <typename T>
struct CsOcdaResult {
  TeacherResult<T> teacher;
  std::vector<ClientResult<T>> clients;
  Aggregate ours_hter, ours_auc, baseline_hter, baseline_auc;
};

// Routing by explicit client id; mismatched ids are contract errors.
template <typename T>
std::vector<double> score_for_client(
    const ParamSet<T>& teacher, const std::vector<ClientResult<T>>& clients,
    int client_id, const ExtractorArch& arch, const ImageBatch<T>& batch) {
  for (const auto& c : clients)
    if (c.client == client_id)
      return score(teacher, c.student.params, arch, batch);
  throw contract_error("no student for client " + std::to_string(client_id));
}

// Client-specific OCDA: one shared teacher, one student per client, each
// evaluated on its own client's test split.
template <typename T>
CsOcdaResult<T> run_cs_ocda(const ProtocolConfig& cfg) {
  cfg.validate_client_specific();
  if (cfg.target.train.attack > 0)
    throw protocol_error("target train split must be genuine-only");

  auto source = generate_domain<T>(cfg.source);
  auto source_train = filter(source, Split::train);
  const auto arch = default_extractor_arch();
  const auto fcb = default_fcb_arch();

  CsOcdaResult<T> res;
  res.teacher = train_teacher(source_train, arch, fcb, cfg.teacher);

  std::vector<double> oh, oa, bh, ba;
  for (int c = 0; c < cfg.clients; ++c) {
    auto dom = client_variant(cfg.target, c);
    auto data = generate_domain<T>(dom);
    for (auto& s : data) s.client = c;

    auto train = filter(data, Split::train, kGenuine);
    auto val = filter(data, Split::validation, kGenuine);
    auto test = filter(data, Split::test);

    std::set<std::uint64_t> trained_on;
    for (const auto& s : source_train) trained_on.insert(s.id);
    for (const auto& s : train) trained_on.insert(s.id);
    detail::check_split_hygiene(trained_on, detail::ids_of(test));

    ClientResult<T> cr;
    cr.client = c;
    auto scfg = cfg.student;
    scfg.seed = Rng::mix(cfg.student.seed, 500 + static_cast<std::uint64_t>(c));
    cr.student = train_student(train, res.teacher.extractor, arch, scfg);

    for (const auto& s : test)
      require(s.client == c, "sample routed to the wrong client");
    cr.ours.scores = detail::score_dataset(test, [&](const auto& b) {
      return score(res.teacher.extractor, cr.student.params, arch, b);
    });
    cr.baseline.scores = detail::score_dataset(test, [&](const auto& b) {
      return dt_baseline_score(res.teacher.extractor, res.teacher.final_block,
                               arch, fcb, b);
    });

    std::vector<double> vo, vb;
    if (cfg.scheme == ThresholdScheme::challenging) {
      auto so = detail::score_dataset(val, [&](const auto& b) {
        return score(res.teacher.extractor, cr.student.params, arch, b);
      });
      auto sb = detail::score_dataset(val, [&](const auto& b) {
        return dt_baseline_score(res.teacher.extractor,
                                 res.teacher.final_block, arch, fcb, b);
      });
      for (const auto& s : so) vo.push_back(s.score);
      for (const auto& s : sb) vb.push_back(s.score);
    }
    cr.ours.report = evaluate(
        cr.ours.scores, detail::pick_threshold(cfg.scheme, cr.ours.scores, vo));
    cr.baseline.report =
        evaluate(cr.baseline.scores,
                 detail::pick_threshold(cfg.scheme, cr.baseline.scores, vb));

    oh.push_back(cr.ours.report.hter);
    oa.push_back(cr.ours.report.auc);
    bh.push_back(cr.baseline.report.hter);
    ba.push_back(cr.baseline.report.auc);
    res.clients.push_back(std::move(cr));
  }
  res.ours_hter = aggregate(oh);
  res.ours_auc = aggregate(oa);
  res.baseline_hter = aggregate(bh);
  res.baseline_auc = aggregate(ba);
  return res;
}

}  // namespace ockd
