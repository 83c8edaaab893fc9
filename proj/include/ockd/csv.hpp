#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ockd/metrics.hpp"

namespace ockd {

namespace detail {

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream f(path, std::ios::binary);  // keep \n line endings everywhere
  if (!f) throw io_error("cannot open for writing: " + path);
  f << std::setprecision(17);
  return f;
}

}  // namespace detail

inline void write_report_csv(const EvalReport& r, const std::string& path) {
  auto f = detail::open_csv(path);
  f << "metric,value\n";
  f << "threshold," << r.threshold << "\n";
  f << "far," << r.far << "\n";
  f << "frr," << r.frr << "\n";
  f << "hter," << r.hter << "\n";
  f << "apcer," << r.apcer << "\n";
  f << "bpcer," << r.bpcer << "\n";
  f << "acer," << r.acer << "\n";
  f << "auc," << r.auc << "\n";
  if (!f) throw io_error("write failed: " + path);
}

inline void write_roc_csv(const std::vector<RocPoint>& roc,
                          const std::string& path) {
  auto f = detail::open_csv(path);
  f << "fdr,tdr\n";
  for (const auto& p : roc) f << p.fdr << "," << p.tdr << "\n";
  if (!f) throw io_error("write failed: " + path);
}

// per-sample score dump for external plotting of score distributions
inline void write_scores_csv(const LabeledScores& scores,
                             const std::string& path, int client = -1) {
  auto f = detail::open_csv(path);
  f << "score,label,client\n";
  for (const auto& s : scores)
    f << s.score << "," << (s.label == kAttack ? "attack" : "genuine") << ","
      << client << "\n";
  if (!f) throw io_error("write failed: " + path);
}

inline void write_loss_csv(const std::vector<double>& trace,
                           const std::string& path) {
  auto f = detail::open_csv(path);
  f << "iter,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    f << (i + 1) << "," << trace[i] << "\n";
  if (!f) throw io_error("write failed: " + path);
}

// minimal reader for the metric,value layout written above
inline std::vector<std::pair<std::string, double>> read_metric_csv(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open for reading: " + path);
  std::vector<std::pair<std::string, double>> out;
  std::string line;
  if (!std::getline(f, line) || line != "metric,value")
    throw format_error("not a metric csv: " + path);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw format_error("malformed row in " + path + ": " + line);
    out.emplace_back(line.substr(0, comma),
                     std::stod(line.substr(comma + 1)));
  }
  return out;
}

}  // namespace ockd
