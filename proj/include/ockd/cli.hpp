#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ockd/config.hpp"
#include "ockd/csv.hpp"
#include "ockd/model_io.hpp"
#include "ockd/protocol.hpp"

namespace ockd {

namespace cli_detail {

namespace fs = std::filesystem;

// binary P6 portable pixmap, maxval 255, scaled to [0,1] channel-major
inline Tensor<float> read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open image: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || !f)
    throw format_error("not a binary ppm (P6): " + path);
  if (w != kImageSize || h != kImageSize)
    throw format_error("image must be 128x128: " + path);
  if (maxval != 255) throw format_error("ppm maxval must be 255: " + path);
  f.get();  // single whitespace byte after the header
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size()))
    throw format_error("truncated ppm: " + path);
  Tensor<float> img({kImageChannels, kImageSize, kImageSize});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.v[(static_cast<std::size_t>(c) * h + y) * w + x] =
            static_cast<float>(raw[(static_cast<std::size_t>(y) * w + x) * 3 +
                                   static_cast<std::size_t>(c)]) /
            255.0f;
  return img;
}

struct CommonArgs {
  std::string config_path;
  std::optional<long long> seed;
  std::string out_dir;
  std::optional<double> density;
  std::optional<std::string> scheme;
};

inline void add_common(CLI::App* cmd, CommonArgs& a, bool needs_config) {
  auto* c = cmd->add_option("--config", a.config_path, "run configuration file");
  if (needs_config) c->required();
  cmd->add_option("--seed", a.seed, "override every seed in the config");
  cmd->add_option("--out", a.out_dir, "output directory");
  cmd->add_option("--density", a.density, "override student.density");
  cmd->add_option("--threshold-scheme", a.scheme,
                  "threshold selection scheme")
      ->check(CLI::IsMember({"ideal", "challenging"}));
}

inline std::string resolve_out(const CommonArgs& a) {
  if (!a.out_dir.empty()) return a.out_dir;
  if (const char* env = std::getenv("OCKD_RESULTS_DIR")) return env;
  return "results";
}

inline RunConfig load_config(const CommonArgs& a) {
  RunConfig rc = read_run_config(KeyValues::parse_file(a.config_path));
  if (a.seed) {
    const auto s = static_cast<std::uint64_t>(*a.seed);
    rc.protocol.teacher.seed = Rng::mix(s, 1);
    rc.protocol.student.seed = Rng::mix(s, 2);
    rc.protocol.source.seed = Rng::mix(s, 3);
    rc.protocol.target.seed = Rng::mix(s, 4);
  }
  if (a.density) rc.protocol.student.density = *a.density;
  if (a.scheme) rc.protocol.scheme = parse_threshold_scheme(*a.scheme);
  return rc;
}

inline void save_teacher(const TeacherResult<float>& t,
                         const fs::path& out) {
  const auto arch = default_extractor_arch();
  const auto fcb = default_fcb_arch();
  int pyramid_channels = 0;
  for (const auto& b : arch) pyramid_channels += b.layers.back().out_channels;
  save_model(t.extractor, arch, kImageChannels, ModelKind::teacher_extractor,
             (out / "teacher_extractor.ockd").string());
  save_model(t.final_block, ExtractorArch{{fcb.layers, 1}}, pyramid_channels,
             ModelKind::teacher_fcb, (out / "teacher_fcb.ockd").string());
  write_loss_csv(t.loss_trace, (out / "teacher_loss.csv").string());
}

inline void save_student(const StudentResult<float>& s, double density,
                         const fs::path& out, const std::string& stem) {
  save_model(s.params, default_extractor_arch(), kImageChannels,
             ModelKind::student, (out / (stem + ".ockd")).string(), &s.mask,
             static_cast<float>(density));
  write_loss_csv(s.loss_trace, (out / (stem + "_loss.csv")).string());
}

inline int cmd_train_teacher(const CommonArgs& a) {
  auto rc = load_config(a);
  const fs::path out = resolve_out(a);
  fs::create_directories(out);
  auto source = generate_domain<float>(rc.protocol.source);
  auto teacher = train_teacher(filter(source, Split::train),
                               default_extractor_arch(), default_fcb_arch(),
                               rc.protocol.teacher);
  save_teacher(teacher, out);
  std::cout << "teacher trained: " << (out / "teacher_extractor.ockd").string()
            << "\n";
  return 0;
}

inline int cmd_train_student(const CommonArgs& a) {
  auto rc = load_config(a);
  const fs::path out = resolve_out(a);
  fs::create_directories(out);
  auto teacher = load_model((out / "teacher_extractor.ockd").string());
  if (teacher.info.kind != ModelKind::teacher_extractor)
    throw format_error("teacher_extractor.ockd is not a teacher extractor");
  auto target = generate_domain<float>(rc.protocol.target);
  auto student =
      train_student(filter(target, Split::train, kGenuine), teacher.params,
                    teacher.info.arch, rc.protocol.student);
  save_student(student, rc.protocol.student.density, out, "student");
  std::cout << "student trained: " << (out / "student.ockd").string() << "\n";
  return 0;
}

inline int cmd_run_protocol(const CommonArgs& a) {
  auto rc = load_config(a);
  const fs::path out = resolve_out(a);
  fs::create_directories(out);

  if (rc.mode == ProtocolMode::general) {
    auto res = run_ocda<float>(rc.protocol);
    save_teacher(res.teacher, out);
    save_student(res.student, rc.protocol.student.density, out, "student");
    write_report_csv(res.ours.report, (out / "report_ours.csv").string());
    write_report_csv(res.baseline.report,
                     (out / "report_baseline.csv").string());
    write_roc_csv(res.ours.report.roc, (out / "roc_ours.csv").string());
    write_roc_csv(res.baseline.report.roc,
                  (out / "roc_baseline.csv").string());
    write_scores_csv(res.ours.scores, (out / "scores_ours.csv").string());
    write_scores_csv(res.baseline.scores,
                     (out / "scores_baseline.csv").string());
    std::cout << "ocda: ours hter " << res.ours.report.hter << " auc "
              << res.ours.report.auc << " | baseline hter "
              << res.baseline.report.hter << " auc " << res.baseline.report.auc
              << "\n";
  } else {
    auto res = run_cs_ocda<float>(rc.protocol);
    save_teacher(res.teacher, out);
    // one combined per-sample dump, client column distinguishing rows
    auto all = detail::open_csv((out / "scores_ours.csv").string());
    all << "score,label,client\n";
    for (const auto& c : res.clients) {
      const std::string tag = "client" + std::to_string(c.client);
      save_student(c.student, rc.protocol.student.density, out,
                   "student_" + tag);
      write_report_csv(c.ours.report,
                       (out / ("report_ours_" + tag + ".csv")).string());
      write_report_csv(c.baseline.report,
                       (out / ("report_baseline_" + tag + ".csv")).string());
      write_roc_csv(c.ours.report.roc,
                    (out / ("roc_ours_" + tag + ".csv")).string());
      for (const auto& s : c.ours.scores)
        all << s.score << "," << (s.label == kAttack ? "attack" : "genuine")
            << "," << c.client << "\n";
    }
    auto f = detail::open_csv((out / "summary.csv").string());
    f << "metric,value\n";
    f << "ours_hter_mean," << res.ours_hter.mean << "\n";
    f << "ours_hter_std," << res.ours_hter.stddev << "\n";
    f << "ours_auc_mean," << res.ours_auc.mean << "\n";
    f << "ours_auc_std," << res.ours_auc.stddev << "\n";
    f << "baseline_hter_mean," << res.baseline_hter.mean << "\n";
    f << "baseline_hter_std," << res.baseline_hter.stddev << "\n";
    f << "baseline_auc_mean," << res.baseline_auc.mean << "\n";
    f << "baseline_auc_std," << res.baseline_auc.stddev << "\n";
    std::cout << "cs-ocda: ours hter " << res.ours_hter.mean << " +/- "
              << res.ours_hter.stddev << " | baseline hter "
              << res.baseline_hter.mean << " +/- " << res.baseline_hter.stddev
              << "\n";
  }
  return 0;
}

inline int cmd_score(const CommonArgs& a) {
  auto rc = load_config(a);
  if (rc.score_teacher.empty() || rc.score_student.empty() ||
      rc.score_images.empty())
    throw config_error(
        "missing required config key: score.teacher_model / "
        "score.student_model / score.image_dir");
  const fs::path out = resolve_out(a);
  fs::create_directories(out);

  auto teacher = load_model(rc.score_teacher);
  auto student = load_model(rc.score_student);
  if (student.info.kind != ModelKind::student)
    throw format_error("score.student_model is not a student model");

  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(rc.score_images))
    if (e.is_regular_file() && e.path().extension() == ".ppm")
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw io_error("no .ppm images in " + rc.score_images);

  auto f = detail::open_csv((out / "scores.csv").string());
  f << "file,score\n";
  for (const auto& path : files) {
    ImageBatch<float> b;
    b.data = Tensor<float>({1, kImageChannels, kImageSize, kImageSize});
    auto img = read_ppm(path);
    std::copy(img.v.begin(), img.v.end(), b.data.v.begin());
    const double xi =
        score(teacher.params, student.params, teacher.info.arch, b)[0];
    f << fs::path(path).filename().string() << "," << xi << "\n";
  }
  std::cout << "scored " << files.size() << " images -> "
            << (out / "scores.csv").string() << "\n";
  return 0;
}

inline int cmd_report(const CommonArgs& a) {
  const fs::path out = resolve_out(a);
  if (!fs::is_directory(out))
    throw io_error("results directory not found: " + out.string());
  std::vector<std::string> reports;
  for (const auto& e : fs::directory_iterator(out)) {
    const auto name = e.path().filename().string();
    if (name.rfind("report_", 0) == 0 || name == "summary.csv")
      reports.push_back(e.path().string());
  }
  std::sort(reports.begin(), reports.end());
  if (reports.empty())
    throw io_error("no report csvs in " + out.string());
  for (const auto& path : reports) {
    std::cout << fs::path(path).filename().string() << "\n";
    for (const auto& [k, v] : read_metric_csv(path))
      std::cout << "  " << k << " = " << v << "\n";
  }
  return 0;
}

}  // namespace cli_detail

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"one-class distillation anomaly detection toolkit"};
  app.require_subcommand(1);

  cli_detail::CommonArgs args;
  auto* tt = app.add_subcommand("train-teacher",
                                "train the teacher on the source domain");
  cli_detail::add_common(tt, args, true);
  auto* ts = app.add_subcommand(
      "train-student",
      "train a sparse student against a saved teacher (in --out)");
  cli_detail::add_common(ts, args, true);
  auto* rp = app.add_subcommand("run-protocol",
                                "run the configured protocol end to end");
  cli_detail::add_common(rp, args, true);
  auto* sc = app.add_subcommand("score",
                                "score a directory of 128x128 ppm images");
  cli_detail::add_common(sc, args, true);
  auto* re = app.add_subcommand("report", "summarize a results directory");
  cli_detail::add_common(re, args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (tt->parsed()) return cli_detail::cmd_train_teacher(args);
    if (ts->parsed()) return cli_detail::cmd_train_student(args);
    if (rp->parsed()) return cli_detail::cmd_run_protocol(args);
    if (sc->parsed()) return cli_detail::cmd_score(args);
    return cli_detail::cmd_report(args);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ockd
