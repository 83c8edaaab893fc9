#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "ockd/protocol.hpp"

namespace ockd {

// Flat key = value text. '#' starts a comment, blank lines are ignored, keys
// may appear once. Unknown keys are rejected by the typed reader so typos
// fail loudly instead of silently falling back to defaults.
class KeyValues {
 public:
  static KeyValues parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str(), path);
  }

  static KeyValues parse_text(const std::string& text,
                              const std::string& origin = "<string>") {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw config_error(origin + ":" + std::to_string(lineno) +
                           ": expected key = value");
      const std::string key = trim(t.substr(0, eq));
      const std::string val = trim(t.substr(eq + 1));
      if (key.empty())
        throw config_error(origin + ":" + std::to_string(lineno) +
                           ": empty key");
      if (!kv.values_.emplace(key, val).second)
        throw config_error("duplicate config key: " + key);
    }
    return kv;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key,
                         const std::string& fallback) const {
    auto it = values_.find(key);
    consumed_.insert(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
      throw config_error("missing required config key: " + key);
    consumed_.insert(key);
    return it->second;
  }

  double get_real(const std::string& key, double fallback) const {
    return has(key) ? to_real(key, require_string(key))
                    : (consumed_.insert(key), fallback);
  }
  double require_real(const std::string& key) const {
    return to_real(key, require_string(key));
  }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? to_int(key, require_string(key))
                    : (consumed_.insert(key), fallback);
  }
  long long require_int(const std::string& key) const {
    return to_int(key, require_string(key));
  }

  // every key in the file must have been consumed by a getter
  void reject_unknown() const {
    for (const auto& [k, v] : values_)
      if (!consumed_.count(k)) throw config_error("unknown config key: " + k);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  static double to_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0;
    try {
      x = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw config_error("config key " + key + " is not a real number: " + v);
    }
    if (pos != v.size())
      throw config_error("config key " + key + " is not a real number: " + v);
    return x;
  }
  static long long to_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long x = 0;
    try {
      x = std::stoll(v, &pos);
    } catch (const std::exception&) {
      throw config_error("config key " + key + " is not an integer: " + v);
    }
    if (pos != v.size())
      throw config_error("config key " + key + " is not an integer: " + v);
    return x;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

enum class ProtocolMode { general, client_specific };

struct RunConfig {
  ProtocolConfig protocol;
  ProtocolMode mode = ProtocolMode::general;
  // score-subcommand inputs, unused elsewhere
  std::string score_teacher, score_student, score_images;
};

namespace detail {

inline DomainSpec read_domain(const KeyValues& kv, const std::string& prefix,
                              int default_id) {
  DomainSpec d;
  d.id = static_cast<int>(kv.get_int(prefix + ".id", default_id));
  d.seed = static_cast<std::uint64_t>(
      kv.get_int(prefix + ".seed", default_id * 17));
  d.hue = kv.get_real(prefix + ".hue", d.hue);
  d.illumination = kv.get_real(prefix + ".illumination", d.illumination);
  d.noise = kv.get_real(prefix + ".noise", d.noise);
  d.grid_strength = kv.get_real(prefix + ".grid_strength", d.grid_strength);
  d.blur_radius =
      static_cast<int>(kv.get_int(prefix + ".blur_radius", d.blur_radius));
  d.color_shift[0] = kv.get_real(prefix + ".color_shift_r", d.color_shift[0]);
  d.color_shift[1] = kv.get_real(prefix + ".color_shift_g", d.color_shift[1]);
  d.color_shift[2] = kv.get_real(prefix + ".color_shift_b", d.color_shift[2]);
  auto counts = [&](const std::string& split, SplitCounts& c) {
    c.genuine = static_cast<int>(
        kv.get_int(prefix + "." + split + "_genuine", c.genuine));
    c.attack = static_cast<int>(
        kv.get_int(prefix + "." + split + "_attack", c.attack));
  };
  counts("train", d.train);
  counts("validation", d.validation);
  counts("test", d.test);
  return d;
}

}  // namespace detail

// Builds the full run description; train-rate/batch/iteration keys are
// required, everything else has documented defaults.
inline RunConfig read_run_config(const KeyValues& kv) {
  RunConfig rc;
  auto& p = rc.protocol;

  p.teacher.lr = kv.require_real("teacher.lr");
  p.teacher.batch = static_cast<int>(kv.require_int("teacher.batch"));
  p.teacher.iters = static_cast<int>(kv.require_int("teacher.iters"));
  p.teacher.seed = static_cast<std::uint64_t>(kv.get_int("teacher.seed", 1));

  p.student.lr = kv.require_real("student.lr");
  p.student.batch = static_cast<int>(kv.require_int("student.batch"));
  p.student.iters = static_cast<int>(kv.require_int("student.iters"));
  p.student.density = kv.require_real("student.density");
  p.student.period =
      static_cast<int>(kv.get_int("student.period", p.student.period));
  p.student.rate0 =
      kv.get_real("student.rate0", default_regrowth_rate(p.student.density));
  p.student.lambda.l1 = kv.get_real("student.lambda1", p.student.lambda.l1);
  p.student.lambda.l2 = kv.get_real("student.lambda2", p.student.lambda.l2);
  p.student.lambda.l3 = kv.get_real("student.lambda3", p.student.lambda.l3);
  p.student.seed = static_cast<std::uint64_t>(kv.get_int("student.seed", 2));

  const std::string mode = kv.get_string("protocol.mode", "general");
  if (mode == "general")
    rc.mode = ProtocolMode::general;
  else if (mode == "client-specific")
    rc.mode = ProtocolMode::client_specific;
  else
    throw config_error("protocol.mode must be general or client-specific");
  p.clients = static_cast<int>(kv.get_int("protocol.clients", p.clients));
  p.scheme = parse_threshold_scheme(kv.get_string("protocol.scheme", "ideal"));

  // desk-scale defaults; source gets both classes, target train is genuine
  p.source = detail::read_domain(kv, "source", 1);
  if (!kv.has("source.train_genuine")) p.source.train.genuine = 600;
  if (!kv.has("source.train_attack")) p.source.train.attack = 600;
  p.target = detail::read_domain(kv, "target", 2);
  if (!kv.has("target.hue")) p.target.hue = 0.45;
  if (!kv.has("target.train_genuine")) p.target.train.genuine = 100;
  if (!kv.has("target.validation_genuine"))
    p.target.validation.genuine = static_cast<int>(
        std::ceil(0.2 * p.target.train.genuine));
  if (!kv.has("target.test_genuine")) p.target.test.genuine = 100;
  if (!kv.has("target.test_attack")) p.target.test.attack = 200;

  rc.score_teacher = kv.get_string("score.teacher_model", "");
  rc.score_student = kv.get_string("score.student_model", "");
  rc.score_images = kv.get_string("score.image_dir", "");

  kv.reject_unknown();
  return rc;
}

}  // namespace ockd
