#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ntk/io.hpp"
#include "ntk/numcore.hpp"

namespace ntk {

struct MmEntry {
  std::string task;
  std::string subject;
  double accuracy = 0.0;
  double bound = 0.0;     // upper percentile of this subject's pooled null
  double bound_lo = 0.0;  // mirrored lower percentile (two-sided band)
  int n_trials = 0;
  int null_n = 0;
};

struct IscEntry {
  std::string task;
  std::vector<double> per_fold;
  std::vector<double> per_fold_bound;  // per-fold surrogate percentile bounds
  double mean_isc = 0.0;
  double bound = 0.0;  // percentile bound for the fold mean, from refit surrogates
  int n_surr = 0;
};

struct RankComparison {
  std::string metric;
  std::string a;
  std::string b;
  double p = std::numeric_limits<double>::quiet_NaN();  // NaN = not computable
  int n = 0;
};

struct GazeStatEntry {
  std::string task;
  double mean_pct = 0.0;
  double std_pct = 0.0;
};

struct RunReport {
  std::string version = "ntk 0.1.0";
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<std::string> tasks;
  std::vector<std::string> subjects;
  std::vector<std::string> videos;
  std::vector<MmEntry> mm;                       // task-major, then subject
  std::map<std::string, double> mm_pooled_bound;  // per task, subject-pooled null
  std::vector<IscEntry> isc;
  std::vector<RankComparison> comparisons;
  std::vector<GazeStatEntry> gaze;
  int leakage_folds_checked = 0;
  bool leakage_passed = false;
  // Per (task, subject) decoded-trial logs; written as CSV, not JSON.
  std::map<std::pair<std::string, std::string>, std::vector<TrialLogRow>> trial_logs;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace detail

inline nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json j;
  j["magic"] = "ntkreport1";
  j["version"] = report.version;
  j["seed"] = report.seed;
  j["config_hash"] = detail::hex64(report.config_hash);
  j["tasks"] = report.tasks;
  j["subjects"] = report.subjects;
  j["videos"] = report.videos;

  nlohmann::json mm = nlohmann::json::object();
  for (const MmEntry& e : report.mm)
    mm[e.task][e.subject] = {{"accuracy", detail::number_or_null(e.accuracy)},
                             {"bound", detail::number_or_null(e.bound)},
                             {"bound_lo", detail::number_or_null(e.bound_lo)},
                             {"n_trials", e.n_trials},
                             {"null_n", e.null_n}};
  j["mm"] = mm;
  j["mm_pooled_bound"] = report.mm_pooled_bound;

  nlohmann::json isc = nlohmann::json::object();
  for (const IscEntry& e : report.isc)
    isc[e.task] = {{"per_fold", e.per_fold},
                   {"per_fold_bound", e.per_fold_bound},
                   {"mean", detail::number_or_null(e.mean_isc)},
                   {"bound", detail::number_or_null(e.bound)},
                   {"n_surr", e.n_surr}};
  j["isc"] = isc;

  nlohmann::json cmp = nlohmann::json::array();
  for (const RankComparison& c : report.comparisons)
    cmp.push_back({{"metric", c.metric},
                   {"a", c.a},
                   {"b", c.b},
                   {"p", detail::number_or_null(c.p)},
                   {"n", c.n}});
  j["comparisons"] = cmp;

  nlohmann::json gaze = nlohmann::json::object();
  for (const GazeStatEntry& g : report.gaze)
    gaze[g.task] = {{"mean_pct", g.mean_pct}, {"std_pct", g.std_pct}};
  j["gaze_shift"] = gaze;

  j["leakage_audit"] = {{"checked_folds", report.leakage_folds_checked},
                        {"passed", report.leakage_passed}};
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  require(detail::json_get<std::string>(j, "magic", "report") == "ntkreport1",
          errc::format_error, "report: bad magic");
  RunReport report;
  report.version = detail::json_get<std::string>(j, "version", "report");
  report.seed = detail::json_get<std::uint64_t>(j, "seed", "report");
  report.config_hash =
      std::stoull(detail::json_get<std::string>(j, "config_hash", "report"), nullptr, 16);
  report.tasks = detail::json_get<std::vector<std::string>>(j, "tasks", "report");
  report.subjects = detail::json_get<std::vector<std::string>>(j, "subjects", "report");
  report.videos = detail::json_get<std::vector<std::string>>(j, "videos", "report");

  auto num_or_nan = [](const nlohmann::json& e, const char* key) {
    return e.at(key).is_null() ? std::numeric_limits<double>::quiet_NaN()
                               : e.at(key).get<double>();
  };
  for (const auto& [task, subjects] : j.at("mm").items())
    for (const auto& [subject, e] : subjects.items())
      report.mm.push_back({task, subject, num_or_nan(e, "accuracy"), num_or_nan(e, "bound"),
                           num_or_nan(e, "bound_lo"), e.at("n_trials").get<int>(),
                           e.at("null_n").get<int>()});
  for (const auto& [task, bound] : j.at("mm_pooled_bound").items())
    report.mm_pooled_bound[task] =
        bound.is_null() ? std::numeric_limits<double>::quiet_NaN() : bound.get<double>();
  for (const auto& [task, e] : j.at("isc").items())
    report.isc.push_back({task, e.at("per_fold").get<std::vector<double>>(),
                          e.at("per_fold_bound").get<std::vector<double>>(),
                          num_or_nan(e, "mean"), num_or_nan(e, "bound"),
                          e.at("n_surr").get<int>()});
  for (const auto& c : j.at("comparisons"))
    report.comparisons.push_back(
        {c.at("metric").get<std::string>(), c.at("a").get<std::string>(),
         c.at("b").get<std::string>(),
         c.at("p").is_null() ? std::numeric_limits<double>::quiet_NaN()
                             : c.at("p").get<double>(),
         c.at("n").get<int>()});
  if (j.contains("gaze_shift"))
    for (const auto& [task, g] : j.at("gaze_shift").items())
      report.gaze.push_back(
          {task, g.at("mean_pct").get<double>(), g.at("std_pct").get<double>()});
  report.leakage_folds_checked = j.at("leakage_audit").at("checked_folds").get<int>();
  report.leakage_passed = j.at("leakage_audit").at("passed").get<bool>();
  return report;
}

namespace detail {

inline std::string svg_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct SvgCanvas {
  std::string body;

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0, bool dashed = false) {
    body += "<line x1=\"" + svg_num(x1) + "\" y1=\"" + svg_num(y1) + "\" x2=\"" + svg_num(x2) +
            "\" y2=\"" + svg_num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
            svg_num(width) + "\"";
    if (dashed) body += " stroke-dasharray=\"6 3\"";
    body += "/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke) {
    body += "<rect x=\"" + svg_num(x) + "\" y=\"" + svg_num(y) + "\" width=\"" + svg_num(w) +
            "\" height=\"" + svg_num(h) + "\" fill=\"" + fill + "\" stroke=\"" + stroke +
            "\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "middle") {
    body += "<text x=\"" + svg_num(x) + "\" y=\"" + svg_num(y) + "\" font-family=\"sans-serif\"" +
            " font-size=\"" + std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + s +
            "</text>\n";
  }

  std::string finish(int w, int h) const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
           "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
           std::to_string(h) + "\">\n<rect width=\"" + std::to_string(w) + "\" height=\"" +
           std::to_string(h) + "\" fill=\"white\"/>\n" + body + "</svg>\n";
  }
};

/// Box chart with one group per task and a dashed significance line per
/// group; groups without data render a "no data" placeholder.
inline std::string render_box_chart(const std::vector<std::string>& tasks,
                                    const std::map<std::string, std::vector<double>>& values,
                                    const std::map<std::string, double>& bounds,
                                    const std::string& title, double y_lo, double y_hi) {
  const int w = 640, h = 400;
  const double left = 64, right = 24, top = 36, bottom = 48;
  const double plot_w = w - left - right, plot_h = h - top - bottom;
  auto ymap = [&](double v) { return top + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo)); };

  SvgCanvas svg;
  svg.text(w / 2.0, 20, title, 14);
  svg.line(left, top, left, top + plot_h, "#333");
  svg.line(left, top + plot_h, left + plot_w, top + plot_h, "#333");
  for (int i = 0; i <= 4; ++i) {
    const double v = y_lo + (y_hi - y_lo) * i / 4.0;
    const double y = ymap(v);
    svg.line(left - 4, y, left, y, "#333");
    svg.text(left - 8, y + 4, svg_num(v), 11, "end");
  }

  const double step = plot_w / static_cast<double>(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const double cx = left + step * (static_cast<double>(i) + 0.5);
    svg.text(cx, top + plot_h + 18, tasks[i], 12);

    const auto vit = values.find(tasks[i]);
    if (vit == values.end() || vit->second.empty()) {
      svg.text(cx, top + plot_h / 2.0, "no data", 12);
      continue;
    }
    std::vector<double> v = vit->second;
    std::sort(v.begin(), v.end());
    const double lo = v.front(), hi = v.back();
    const double q1 = nearest_rank_percentile(v, 25.0);
    const double med = nearest_rank_percentile(v, 50.0);
    const double q3 = nearest_rank_percentile(v, 75.0);
    const double half = step * 0.22;

    svg.line(cx, ymap(lo), cx, ymap(hi), "#555");
    svg.line(cx - half * 0.6, ymap(lo), cx + half * 0.6, ymap(lo), "#555");
    svg.line(cx - half * 0.6, ymap(hi), cx + half * 0.6, ymap(hi), "#555");
    svg.rect(cx - half, ymap(q3), 2 * half, ymap(q1) - ymap(q3), "#9ecae1", "#333");
    svg.line(cx - half, ymap(med), cx + half, ymap(med), "#333", 2.0);

    const auto bit = bounds.find(tasks[i]);
    if (bit != bounds.end() && !std::isnan(bit->second))
      svg.line(cx - step * 0.4, ymap(bit->second), cx + step * 0.4, ymap(bit->second), "#d62728",
               1.5, true);
  }
  return svg.finish(w, h);
}

}  // namespace detail

/// Writes report.json, per-(task, subject) trial CSVs, and the accuracy
/// and ISC charts into out_dir. Everything is deterministic for a given
/// report.
inline void report_render(const RunReport& report, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, errc::io_error, "cannot create " + out_dir);

  detail::write_text_file(out_dir + "/report.json", report_to_json(report).dump(2) + "\n");

  for (const auto& [key, rows] : report.trial_logs)
    store_trial_log(rows, out_dir + "/trials_" + key.first + "_" + key.second + ".csv");

  std::map<std::string, std::vector<double>> acc;
  for (const MmEntry& e : report.mm) acc[e.task].push_back(e.accuracy);
  std::string svg = detail::render_box_chart(report.tasks, acc, report.mm_pooled_bound,
                                             "match-mismatch accuracy by task", 0.0, 1.0);
  detail::write_text_file(out_dir + "/accuracy_by_task.svg", svg);

  std::map<std::string, std::vector<double>> iscv;
  std::map<std::string, double> isc_bounds;
  double hi = 0.0, lo = 0.0;
  for (const IscEntry& e : report.isc) {
    iscv[e.task] = e.per_fold;
    isc_bounds[e.task] = e.bound;
    for (const double v : e.per_fold) {
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
    hi = std::max(hi, e.bound);
  }
  hi = hi <= lo ? lo + 1.0 : hi + 0.15 * (hi - lo);
  svg = detail::render_box_chart(report.tasks, iscv, isc_bounds,
                                 "ISC (sum of first two components) by task", lo, hi);
  detail::write_text_file(out_dir + "/isc_by_task.svg", svg);
}

}  // namespace ntk
