#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ntk/cca.hpp"
#include "ntk/corrca.hpp"
#include "ntk/gazefix.hpp"
#include "ntk/numcore.hpp"
#include "ntk/rng.hpp"
#include "ntk/timeseries.hpp"

namespace ntk {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace detail {

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::io_error, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), errc::io_error, "cannot open " + path + " for writing");
  out << text;
  require(out.good(), errc::io_error, "write failed for " + path);
}

inline nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(errc::format_error, path + ": " + e.what());
  }
}

template <typename T>
T json_get(const nlohmann::json& j, const std::string& key, const std::string& context) {
  require(j.contains(key), errc::format_error, context + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(errc::format_error, context + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace detail

using detail::parse_json_file;
using detail::read_text_file;
using detail::write_text_file;

/// Binary sample payload with a JSON sidecar header at <path>.json.
/// Payload is little-endian float32, row-major in sample order.
inline void store_timeseries(const TimeSeriesMatrix& ts, const std::string& path) {
  ts.validate();
  nlohmann::json header{{"magic", "ntk1"},
                        {"n_samples", ts.n_samples()},
                        {"n_channels", ts.n_channels()},
                        {"rate_hz", ts.rate_hz},
                        {"labels", ts.channel_labels},
                        {"video_id", ts.video_id}};
  detail::write_text_file(path + ".json", header.dump(2) + "\n");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), errc::io_error, "cannot open " + path + " for writing");
  std::vector<float> row(static_cast<std::size_t>(ts.n_channels()));
  for (Eigen::Index t = 0; t < ts.n_samples(); ++t) {
    for (Eigen::Index c = 0; c < ts.n_channels(); ++c)
      row[static_cast<std::size_t>(c)] = static_cast<float>(ts.samples(t, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  require(out.good(), errc::io_error, "write failed for " + path);
}

inline TimeSeriesMatrix load_timeseries(const std::string& path) {
  const nlohmann::json header = detail::parse_json_file(path + ".json");
  const auto magic = detail::json_get<std::string>(header, "magic", path);
  require(magic == "ntk1", errc::format_error,
          path + ": bad magic '" + magic + "' at byte offset 0 of header");
  const auto t_len = detail::json_get<Eigen::Index>(header, "n_samples", path);
  const auto d = detail::json_get<Eigen::Index>(header, "n_channels", path);
  require(t_len >= 1 && d >= 1, errc::format_error, path + ": non-positive dimensions");

  TimeSeriesMatrix ts;
  ts.rate_hz = detail::json_get<double>(header, "rate_hz", path);
  ts.channel_labels = detail::json_get<std::vector<std::string>>(header, "labels", path);
  ts.video_id = detail::json_get<std::string>(header, "video_id", path);

  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::io_error, "cannot open " + path);
  const auto expected = static_cast<std::uintmax_t>(t_len) * static_cast<std::uintmax_t>(d) *
                        sizeof(float);
  std::error_code ec;
  const std::uintmax_t actual = std::filesystem::file_size(path, ec);
  require(!ec, errc::io_error, "cannot stat " + path);
  require(actual == expected, errc::format_error,
          path + ": payload holds " + std::to_string(actual) + " bytes, header implies " +
              std::to_string(expected) + " (mismatch at byte offset " +
              std::to_string(std::min(actual, expected)) + ")");

  ts.samples.resize(t_len, d);
  std::vector<float> row(static_cast<std::size_t>(d));
  for (Eigen::Index t = 0; t < t_len; ++t) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    require(in.good(), errc::io_error, "read failed for " + path);
    for (Eigen::Index c = 0; c < d; ++c) ts.samples(t, c) = row[static_cast<std::size_t>(c)];
  }
  return ts;
}

/// Numeric CSV import (small files): optional label header row, one sample
/// per line. The rate is not stored in CSV, so the caller supplies it.
inline TimeSeriesMatrix load_timeseries_csv(const std::string& path, double rate_hz,
                                            const std::string& video_id = {}) {
  const std::string text = detail::read_text_file(path);
  std::istringstream lines(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
  bool first = true;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    std::vector<double> row;
    bool numeric = true;
    std::vector<std::string> raw;
    while (std::getline(fields, field, ',')) {
      raw.push_back(field);
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (used != field.size()) numeric = false;
      } catch (...) {
        numeric = false;
      }
    }
    if (first && !numeric) {
      labels = raw;  // header row
      first = false;
      continue;
    }
    first = false;
    require(numeric, errc::format_error, path + ": non-numeric row '" + line + "'");
    require(rows.empty() || row.size() == rows.front().size(), errc::format_error,
            path + ": ragged row '" + line + "'");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), errc::format_error, path + ": no data rows");

  TimeSeriesMatrix ts;
  ts.rate_hz = rate_hz;
  ts.video_id = video_id;
  ts.channel_labels = labels;
  ts.samples.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t c = 0; c < rows[t].size(); ++c)
      ts.samples(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t][c];
  return ts;
}

inline const char* gaze_annotation_name(GazeAnnotation a) {
  switch (a) {
    case GazeAnnotation::none: return "none";
    case GazeAnnotation::blink: return "blink";
    case GazeAnnotation::saccade: return "saccade";
  }
  return "none";
}

inline void store_gaze_csv(const std::vector<GazeSample>& gaze, const std::string& path) {
  std::ostringstream out;
  out << "t_s,x_px,y_px,annotation\n";
  char buf[128];
  for (const GazeSample& g : gaze) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.3f,%.3f,%s\n", g.t, g.x, g.y,
                  gaze_annotation_name(g.annotation));
    out << buf;
  }
  detail::write_text_file(path, out.str());
}

inline std::vector<GazeSample> load_gaze_csv(const std::string& path) {
  const std::string text = detail::read_text_file(path);
  std::istringstream lines(text);
  std::string line;
  require(std::getline(lines, line) && line.rfind("t_s,x_px,y_px,annotation", 0) == 0,
          errc::format_error, path + ": expected header 't_s,x_px,y_px,annotation'");
  std::vector<GazeSample> gaze;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string t_s, x_s, y_s, ann;
    require(std::getline(fields, t_s, ',') && std::getline(fields, x_s, ',') &&
                std::getline(fields, y_s, ',') && std::getline(fields, ann),
            errc::format_error, path + ": malformed row '" + line + "'");
    GazeSample g;
    try {
      g.t = std::stod(t_s);
      g.x = std::stod(x_s);
      g.y = std::stod(y_s);
    } catch (...) {
      fail(errc::format_error, path + ": non-numeric row '" + line + "'");
    }
    if (ann == "none") g.annotation = GazeAnnotation::none;
    else if (ann == "blink") g.annotation = GazeAnnotation::blink;
    else if (ann == "saccade") g.annotation = GazeAnnotation::saccade;
    else fail(errc::format_error, path + ": unknown annotation '" + ann + "'");
    gaze.push_back(g);
  }
  return gaze;
}

namespace detail {

inline nlohmann::json runs_of(const std::vector<bool>& flags, bool value) {
  nlohmann::json runs = nlohmann::json::array();
  std::size_t i = 0;
  while (i < flags.size()) {
    if (flags[i] != value) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < flags.size() && flags[j] == value) ++j;
    runs.push_back({i, j});  // half-open [i, j)
    i = j;
  }
  return runs;
}

inline std::vector<bool> runs_to_flags(const nlohmann::json& runs, std::size_t n, bool value,
                                       const std::string& context) {
  std::vector<bool> flags(n, !value);
  for (const auto& r : runs) {
    require(r.is_array() && r.size() == 2, errc::format_error, context + ": bad run entry");
    const auto a = r[0].get<std::size_t>();
    const auto b = r[1].get<std::size_t>();
    require(a <= b && b <= n, errc::format_error, context + ": run out of range");
    for (std::size_t i = a; i < b; ++i) flags[i] = value;
  }
  return flags;
}

}  // namespace detail

/// Mask JSON: run-length intervals of excluded and blink bins plus rate,
/// length, and video id.
inline void store_mask_json(const FixationMask& mask, const std::string& path) {
  nlohmann::json j{{"magic", "ntkmask1"},
                   {"rate_hz", mask.rate_hz},
                   {"length", mask.flags.size()},
                   {"video_id", mask.video_id},
                   {"excluded", detail::runs_of(mask.flags, false)},
                   {"blink", detail::runs_of(mask.blink, true)}};
  detail::write_text_file(path, j.dump(2) + "\n");
}

inline FixationMask load_mask_json(const std::string& path) {
  const nlohmann::json j = detail::parse_json_file(path);
  require(detail::json_get<std::string>(j, "magic", path) == "ntkmask1", errc::format_error,
          path + ": bad magic");
  FixationMask mask;
  mask.rate_hz = detail::json_get<double>(j, "rate_hz", path);
  mask.video_id = detail::json_get<std::string>(j, "video_id", path);
  const auto n = detail::json_get<std::size_t>(j, "length", path);
  require(j.contains("excluded") && j.contains("blink"), errc::format_error,
          path + ": missing run lists");
  std::vector<bool> excluded = detail::runs_to_flags(j.at("excluded"), n, true, path);
  mask.flags.resize(n);
  for (std::size_t i = 0; i < n; ++i) mask.flags[i] = !excluded[i];
  mask.blink = detail::runs_to_flags(j.at("blink"), n, true, path);
  return mask;
}

namespace detail {

inline void write_matrix_f64(std::ofstream& out, const Eigen::MatrixXd& m) {
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
}

inline Eigen::MatrixXd read_matrix_f64(std::ifstream& in, Eigen::Index rows, Eigen::Index cols,
                                       const std::string& path) {
  Eigen::MatrixXd m(rows, cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (Eigen::Index r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
    require(in.good(), errc::format_error, path + ": filter payload truncated");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

inline nlohmann::json lagspec_json(const LagSpec& s) {
  return {{"num_lags", s.num_lags}, {"offset", s.offset}};
}

inline LagSpec lagspec_from_json(const nlohmann::json& j, const std::string& context) {
  LagSpec s;
  s.num_lags = json_get<int>(j, "num_lags", context);
  s.offset = json_get<int>(j, "offset", context);
  return s;
}

}  // namespace detail

/// Model files: <path>.json header plus <path>.bin float64 row-major
/// filter payload (wx then wy).
inline void store_cca_model(const CcaModel& model, const std::string& path) {
  nlohmann::json header{{"magic", "ntkcca1"},
                        {"dx", model.wx.rows()},
                        {"dy", model.wy.rows()},
                        {"k", model.k()},
                        {"eeg_spec", detail::lagspec_json(model.eeg_spec)},
                        {"stim_spec", detail::lagspec_json(model.stim_spec)},
                        {"reg_lambda", model.reg_lambda},
                        {"train_correlations", model.train_correlations}};
  detail::write_text_file(path + ".json", header.dump(2) + "\n");
  std::ofstream out(path + ".bin", std::ios::binary | std::ios::trunc);
  require(out.good(), errc::io_error, "cannot open " + path + ".bin for writing");
  detail::write_matrix_f64(out, model.wx);
  detail::write_matrix_f64(out, model.wy);
  require(out.good(), errc::io_error, "write failed for " + path + ".bin");
}

inline CcaModel load_cca_model(const std::string& path) {
  const nlohmann::json header = detail::parse_json_file(path + ".json");
  require(detail::json_get<std::string>(header, "magic", path) == "ntkcca1", errc::format_error,
          path + ": bad magic");
  const auto dx = detail::json_get<Eigen::Index>(header, "dx", path);
  const auto dy = detail::json_get<Eigen::Index>(header, "dy", path);
  const auto k = detail::json_get<Eigen::Index>(header, "k", path);
  require(dx >= 1 && dy >= 1 && k >= 1, errc::format_error, path + ": bad dimensions");

  CcaModel model;
  model.eeg_spec = detail::lagspec_from_json(header.at("eeg_spec"), path);
  model.stim_spec = detail::lagspec_from_json(header.at("stim_spec"), path);
  model.reg_lambda = detail::json_get<double>(header, "reg_lambda", path);
  model.train_correlations =
      detail::json_get<std::vector<double>>(header, "train_correlations", path);
  require(static_cast<Eigen::Index>(model.train_correlations.size()) == k, errc::format_error,
          path + ": correlation count does not match k");

  std::ifstream in(path + ".bin", std::ios::binary);
  require(in.good(), errc::io_error, "cannot open " + path + ".bin");
  model.wx = detail::read_matrix_f64(in, dx, k, path);
  model.wy = detail::read_matrix_f64(in, dy, k, path);
  return model;
}

inline void store_corrca_model(const CorrCaModel& model, const std::string& path) {
  nlohmann::json header{{"magic", "ntkcorrca1"},
                        {"d", model.ws.rows()},
                        {"k", model.k()},
                        {"eeg_spec", detail::lagspec_json(model.eeg_spec)},
                        {"reg_lambda", model.reg_lambda},
                        {"eigenvalues", model.eigenvalues}};
  detail::write_text_file(path + ".json", header.dump(2) + "\n");
  std::ofstream out(path + ".bin", std::ios::binary | std::ios::trunc);
  require(out.good(), errc::io_error, "cannot open " + path + ".bin for writing");
  detail::write_matrix_f64(out, model.ws);
  require(out.good(), errc::io_error, "write failed for " + path + ".bin");
}

inline CorrCaModel load_corrca_model(const std::string& path) {
  const nlohmann::json header = detail::parse_json_file(path + ".json");
  require(detail::json_get<std::string>(header, "magic", path) == "ntkcorrca1",
          errc::format_error, path + ": bad magic");
  const auto d = detail::json_get<Eigen::Index>(header, "d", path);
  const auto k = detail::json_get<Eigen::Index>(header, "k", path);
  require(d >= 1 && k >= 1, errc::format_error, path + ": bad dimensions");

  CorrCaModel model;
  model.eeg_spec = detail::lagspec_from_json(header.at("eeg_spec"), path);
  model.reg_lambda = detail::json_get<double>(header, "reg_lambda", path);
  model.eigenvalues = detail::json_get<std::vector<double>>(header, "eigenvalues", path);
  require(static_cast<Eigen::Index>(model.eigenvalues.size()) == k, errc::format_error,
          path + ": eigenvalue count does not match k");
  std::ifstream in(path + ".bin", std::ios::binary);
  require(in.good(), errc::io_error, "cannot open " + path + ".bin");
  model.ws = detail::read_matrix_f64(in, d, k, path);
  return model;
}

inline void store_null_json(const NullDistribution& null, const std::string& path) {
  nlohmann::json j{{"magic", "ntknull1"},
                   {"method", null.method},
                   {"seed", null.seed},
                   {"values", null.values}};
  detail::write_text_file(path, j.dump(2) + "\n");
}

inline NullDistribution load_null_json(const std::string& path) {
  const nlohmann::json j = detail::parse_json_file(path);
  require(detail::json_get<std::string>(j, "magic", path) == "ntknull1", errc::format_error,
          path + ": bad magic");
  NullDistribution null;
  null.method = detail::json_get<std::string>(j, "method", path);
  null.seed = detail::json_get<std::uint64_t>(j, "seed", path);
  null.values = detail::json_get<std::vector<double>>(j, "values", path);
  return null;
}

/// One decoded-trial row of the experiment log.
struct TrialLogRow {
  int fold = 0;
  std::string video;
  Eigen::Index start_match = 0;
  Eigen::Index start_mismatch = 0;
  double score_match = 0.0;
  double score_mismatch = 0.0;
  bool picked_match = false;
};

inline void store_trial_log(const std::vector<TrialLogRow>& rows, const std::string& path) {
  std::ostringstream out;
  out << "fold,video,start_match,start_mismatch,score_match,score_mismatch,picked\n";
  char buf[256];
  for (const TrialLogRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%lld,%lld,%.9g,%.9g,%s\n", r.fold, r.video.c_str(),
                  static_cast<long long>(r.start_match), static_cast<long long>(r.start_mismatch),
                  r.score_match, r.score_mismatch, r.picked_match ? "match" : "mismatch");
    out << buf;
  }
  detail::write_text_file(path, out.str());
}

/// Stable hash of a JSON document (order-independent: objects are dumped
/// with sorted keys).
inline std::uint64_t json_hash(const nlohmann::json& j) { return hash_str(j.dump()); }

}  // namespace ntk
