#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ntk/cca.hpp"
#include "ntk/corrca.hpp"
#include "ntk/gazefix.hpp"
#include "ntk/io.hpp"
#include "ntk/lagembed.hpp"
#include "ntk/mmdecode.hpp"
#include "ntk/nullmodels.hpp"
#include "ntk/report.hpp"
#include "ntk/sigproc.hpp"
#include "ntk/synthgen.hpp"
#include "ntk/threadpool.hpp"

namespace ntk {

struct PreprocessParams {
  double highpass_hz = 0.0;     // 0 disables
  double notch_hz = 0.0;        // 0 disables
  double target_rate_hz = 0.0;  // 0 disables
  bool average_reference = false;
  std::vector<std::string> eog_channels;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  double reg_lambda = 1e-6;
  double percentile = 97.5;
  int threads = 1;

  LagSpec cca_eeg{3, 1};
  LagSpec cca_stim{15, 0};
  int cca_k = 2;
  LagSpec corrca_eeg{5, 2};
  int corrca_k = 2;

  double win_s = 45.0;
  double mean_interval_s = 2.0;
  int n_perm = 100;
  int n_surr = 500;

  bool use_fixation_mask = true;   // gates CCA test-segment sampling
  bool corrca_use_mask = false;    // CorrCA keeps all samples by default
  double margin_s = 0.5;
  double dbscan_eps_frac = 0.02;  // fraction of the screen diagonal
  int dbscan_min_pts = 20;
  double screen_w = 1920.0;
  double screen_h = 1080.0;

  double event_exclusion_s = 1.0;
  bool aggregate_tasks = true;

  // Data source: exactly one of synth or manifest.
  bool use_synth = false;
  SynthCohortConfig synth_base;
  struct SynthTask {
    std::string name;
    double attention_gain = 1.0;
    EccProfile profile = EccProfile::constant;
    double ecc_attenuation = 1.0;
  };
  std::vector<SynthTask> synth_tasks;

  struct VideoPaths {
    std::string id, eeg, stim, gaze;  // gaze may be empty
    std::vector<double> events_s;
  };
  struct SubjectData {
    std::string id;
    std::vector<VideoPaths> videos;
  };
  struct TaskData {
    std::string name;
    std::vector<SubjectData> subjects;
  };
  std::vector<TaskData> manifest;
  std::optional<PreprocessParams> preprocess;

  std::uint64_t config_hash = 0;  // set by parse_config

  void validate() const {
    require(percentile > 0.0 && percentile <= 100.0, errc::config_invalid,
            "percentile must lie in (0, 100]");
    require(reg_lambda >= 0.0, errc::negative_lambda, "reg_lambda must be nonnegative");
    require(cca_k >= 1 && corrca_k >= 1, errc::config_invalid, "k must be positive");
    require(win_s > 0.0 && mean_interval_s > 0.0, errc::config_invalid,
            "segment parameters must be positive");
    require(n_perm >= 1 && n_surr >= 1, errc::config_invalid, "null sizes must be positive");
    require(margin_s >= 0.0 && event_exclusion_s >= 0.0, errc::config_invalid,
            "margins must be nonnegative");
    require(threads >= 1, errc::config_invalid, "threads must be positive");
    cca_eeg.validate();
    cca_stim.validate();
    corrca_eeg.validate();
    require(use_synth != !manifest.empty(), errc::config_invalid,
            "exactly one of synth and manifest must be given");
    if (use_synth) require(!synth_tasks.empty(), errc::config_invalid, "no synth tasks");
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& context) {
  require(j.is_object(), errc::config_invalid, context + ": expected an object");
  for (const auto& [key, value] : j.items())
    require(allowed.count(key) == 1, errc::config_invalid,
            context + ": unknown key '" + key + "'");
}

template <typename T>
T opt(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(errc::config_invalid, "bad value for '" + key + "': " + e.what());
  }
}

inline EccProfile ecc_profile_from_string(const std::string& s) {
  if (s == "constant") return EccProfile::constant;
  if (s == "linear_ramp") return EccProfile::linear_ramp;
  fail(errc::config_invalid, "unknown eccentricity_profile '" + s + "'");
}

}  // namespace detail

/// Strict config parser: unknown keys are rejected at every level.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::opt;
  check_keys(j, {"seed", "reg_lambda", "percentile", "threads", "cca", "corrca", "segments",
                 "nulls", "fixation", "event_exclusion_s", "train_scope", "synth", "manifest",
                 "preprocess"},
             "config");

  ExperimentConfig cfg;
  cfg.seed = opt<std::uint64_t>(j, "seed", 0);
  cfg.reg_lambda = opt<double>(j, "reg_lambda", 1e-6);
  cfg.percentile = opt<double>(j, "percentile", 97.5);
  cfg.threads = opt<int>(j, "threads", 1);
  cfg.event_exclusion_s = opt<double>(j, "event_exclusion_s", 1.0);

  const std::string scope = opt<std::string>(j, "train_scope", "aggregate");
  require(scope == "aggregate" || scope == "single-task", errc::config_invalid,
          "train_scope must be 'aggregate' or 'single-task'");
  cfg.aggregate_tasks = scope == "aggregate";

  if (j.contains("cca")) {
    const auto& c = j.at("cca");
    check_keys(c, {"eeg_lags", "eeg_offset", "stim_lags", "stim_offset", "k"}, "cca");
    cfg.cca_eeg = {opt<int>(c, "eeg_lags", 3), opt<int>(c, "eeg_offset", 1)};
    cfg.cca_stim = {opt<int>(c, "stim_lags", 15), opt<int>(c, "stim_offset", 0)};
    cfg.cca_k = opt<int>(c, "k", 2);
  }
  if (j.contains("corrca")) {
    const auto& c = j.at("corrca");
    check_keys(c, {"eeg_lags", "eeg_offset", "k"}, "corrca");
    cfg.corrca_eeg = {opt<int>(c, "eeg_lags", 5), opt<int>(c, "eeg_offset", 2)};
    cfg.corrca_k = opt<int>(c, "k", 2);
  }
  if (j.contains("segments")) {
    const auto& c = j.at("segments");
    check_keys(c, {"win_s", "mean_interval_s"}, "segments");
    cfg.win_s = opt<double>(c, "win_s", 45.0);
    cfg.mean_interval_s = opt<double>(c, "mean_interval_s", 2.0);
  }
  if (j.contains("nulls")) {
    const auto& c = j.at("nulls");
    check_keys(c, {"n_perm", "n_surr"}, "nulls");
    cfg.n_perm = opt<int>(c, "n_perm", 100);
    cfg.n_surr = opt<int>(c, "n_surr", 500);
  }
  if (j.contains("fixation")) {
    const auto& c = j.at("fixation");
    check_keys(c, {"use_mask", "corrca_use_mask", "margin_s", "eps_frac_diag", "min_pts",
                   "screen_w", "screen_h"},
               "fixation");
    cfg.use_fixation_mask = opt<bool>(c, "use_mask", true);
    cfg.corrca_use_mask = opt<bool>(c, "corrca_use_mask", false);
    cfg.margin_s = opt<double>(c, "margin_s", 0.5);
    cfg.dbscan_eps_frac = opt<double>(c, "eps_frac_diag", 0.02);
    cfg.dbscan_min_pts = opt<int>(c, "min_pts", 20);
    cfg.screen_w = opt<double>(c, "screen_w", 1920.0);
    cfg.screen_h = opt<double>(c, "screen_h", 1080.0);
  }

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    check_keys(s, {"n_subjects", "n_videos", "video_len_s", "rate_hz", "n_channels", "kernel",
                   "noise_sigma", "shared_fraction", "mixing_jitter", "event_rate_per_min",
                   "gaze_rate_hz", "gaze_shift_rate_per_min", "gaze_blink_rate_per_min",
                   "tasks"},
               "synth");
    cfg.use_synth = true;
    SynthCohortConfig& base = cfg.synth_base;
    base.n_subjects = opt<int>(s, "n_subjects", 1);
    base.n_videos = opt<int>(s, "n_videos", 2);
    base.video_len_s = opt<double>(s, "video_len_s", 60.0);
    base.rate_hz = opt<double>(s, "rate_hz", 30.0);
    base.n_channels = opt<int>(s, "n_channels", 8);
    base.kernel = opt<std::vector<double>>(s, "kernel", {});
    base.noise_sigma = opt<double>(s, "noise_sigma", 1.0);
    base.shared_fraction = opt<double>(s, "shared_fraction", 0.0);
    base.mixing_jitter = opt<double>(s, "mixing_jitter", 0.3);
    base.event_rate_per_min = opt<double>(s, "event_rate_per_min", 0.0);
    base.gaze_rate_hz = opt<double>(s, "gaze_rate_hz", 0.0);
    base.gaze_shift_rate_per_min = opt<double>(s, "gaze_shift_rate_per_min", 0.0);
    base.gaze_blink_rate_per_min = opt<double>(s, "gaze_blink_rate_per_min", 0.0);
    base.seed = cfg.seed;
    require(s.contains("tasks"), errc::config_invalid, "synth: missing tasks");
    for (const auto& t : s.at("tasks")) {
      check_keys(t, {"name", "attention_gain", "eccentricity_profile", "ecc_attenuation"},
                 "synth task");
      ExperimentConfig::SynthTask task;
      task.name = detail::json_get<std::string>(t, "name", "synth task");
      task.attention_gain = opt<double>(t, "attention_gain", 1.0);
      task.profile = detail::ecc_profile_from_string(
          opt<std::string>(t, "eccentricity_profile", "constant"));
      task.ecc_attenuation = opt<double>(t, "ecc_attenuation", 1.0);
      cfg.synth_tasks.push_back(std::move(task));
    }
  }

  if (j.contains("manifest")) {
    const auto& m = j.at("manifest");
    check_keys(m, {"tasks"}, "manifest");
    require(m.contains("tasks"), errc::manifest_error, "manifest: missing tasks");
    for (const auto& t : m.at("tasks")) {
      check_keys(t, {"name", "subjects"}, "manifest task");
      require(t.contains("subjects"), errc::manifest_error, "manifest task: missing subjects");
      ExperimentConfig::TaskData task;
      task.name = detail::json_get<std::string>(t, "name", "manifest task");
      for (const auto& s : t.at("subjects")) {
        check_keys(s, {"id", "videos"}, "manifest subject");
        require(s.contains("videos"), errc::manifest_error, "manifest subject: missing videos");
        ExperimentConfig::SubjectData subject;
        subject.id = detail::json_get<std::string>(s, "id", "manifest subject");
        for (const auto& v : s.at("videos")) {
          check_keys(v, {"id", "eeg", "stim", "gaze", "events"}, "manifest video");
          ExperimentConfig::VideoPaths paths;
          paths.id = detail::json_get<std::string>(v, "id", "manifest video");
          paths.eeg = detail::json_get<std::string>(v, "eeg", "manifest video");
          paths.stim = detail::json_get<std::string>(v, "stim", "manifest video");
          paths.gaze = detail::opt<std::string>(v, "gaze", "");
          paths.events_s = detail::opt<std::vector<double>>(v, "events", {});
          subject.videos.push_back(std::move(paths));
        }
        task.subjects.push_back(std::move(subject));
      }
      cfg.manifest.push_back(std::move(task));
    }
  }

  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    check_keys(p, {"highpass_hz", "notch_hz", "target_rate_hz", "average_reference",
                   "eog_channels"},
               "preprocess");
    PreprocessParams params;
    params.highpass_hz = opt<double>(p, "highpass_hz", 0.0);
    params.notch_hz = opt<double>(p, "notch_hz", 0.0);
    params.target_rate_hz = opt<double>(p, "target_rate_hz", 0.0);
    params.average_reference = opt<bool>(p, "average_reference", false);
    params.eog_channels = opt<std::vector<std::string>>(p, "eog_channels", {});
    cfg.preprocess = params;
  }

  cfg.config_hash = json_hash(j);
  cfg.validate();
  return cfg;
}

/// Standard cleanup chain: high-pass, notch, downsample, EOG regression,
/// average reference. EOG channels ride through the filters and are
/// dropped after regression.
inline TimeSeriesMatrix preprocess_chain(TimeSeriesMatrix ts, const PreprocessParams& p) {
  if (p.highpass_hz > 0.0) ts = highpass(ts, p.highpass_hz);
  if (p.notch_hz > 0.0) ts = notch(ts, p.notch_hz);
  if (p.target_rate_hz > 0.0 && p.target_rate_hz < ts.rate_hz)
    ts = resample_antialias(ts, p.target_rate_hz);

  if (!p.eog_channels.empty()) {
    std::vector<Eigen::Index> eog, keep;
    for (Eigen::Index c = 0; c < ts.n_channels(); ++c) {
      const std::string& label = ts.channel_labels[static_cast<std::size_t>(c)];
      if (std::find(p.eog_channels.begin(), p.eog_channels.end(), label) !=
          p.eog_channels.end())
        eog.push_back(c);
      else
        keep.push_back(c);
    }
    require(eog.size() == p.eog_channels.size(), errc::config_invalid,
            "EOG channel label not found in data");
    require(!keep.empty(), errc::config_invalid, "no channels left after EOG removal");
    TimeSeriesMatrix signal, reg;
    signal.rate_hz = reg.rate_hz = ts.rate_hz;
    signal.video_id = ts.video_id;
    signal.samples.resize(ts.n_samples(), static_cast<Eigen::Index>(keep.size()));
    reg.samples.resize(ts.n_samples(), static_cast<Eigen::Index>(eog.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
      signal.samples.col(static_cast<Eigen::Index>(i)) = ts.samples.col(keep[i]);
      signal.channel_labels.push_back(ts.channel_labels[static_cast<std::size_t>(keep[i])]);
    }
    for (std::size_t i = 0; i < eog.size(); ++i)
      reg.samples.col(static_cast<Eigen::Index>(i)) = ts.samples.col(eog[i]);
    ts = regress_out(signal, reg);
  }
  if (p.average_reference) ts = average_reference(ts);
  return ts;
}

namespace detail {

/// In-memory staging of one experiment's inputs.
struct CohortTable {
  std::vector<std::string> tasks;
  std::vector<std::string> subjects;
  std::vector<std::string> videos;
  double rate_hz = 0.0;
  // eeg[task][subject][video], centered per video
  std::vector<std::vector<std::vector<TimeSeriesMatrix>>> eeg;
  std::vector<TimeSeriesMatrix> stim;                        // per video, centered
  std::vector<std::vector<double>> events_s;                 // per video
  std::vector<std::vector<std::vector<FixationMask>>> mask;  // post-margin; empty if unused
  std::vector<GazeStatEntry> gaze_stats;                     // pre-margin, per task
};

inline CohortTable stage_synth(const ExperimentConfig& cfg) {
  CohortTable table;
  table.rate_hz = cfg.synth_base.rate_hz;
  const bool want_mask = cfg.use_fixation_mask && cfg.synth_base.gaze_rate_hz > 0.0;
  const double eps =
      cfg.dbscan_eps_frac * std::hypot(cfg.screen_w, cfg.screen_h);

  for (const ExperimentConfig::SynthTask& spec : cfg.synth_tasks) {
    SynthCohortConfig scfg = cfg.synth_base;
    scfg.task_label = spec.name;
    scfg.attention_gain = spec.attention_gain;
    scfg.eccentricity_profile = spec.profile;
    scfg.ecc_attenuation = spec.ecc_attenuation;
    scfg.seed = cfg.seed;
    SynthCohort cohort = gen_cohort(scfg);

    if (table.tasks.empty()) {
      table.videos = cohort.video_ids;
      for (int s = 0; s < scfg.n_subjects; ++s) {
        char name[16];
        std::snprintf(name, sizeof(name), "s%02d", s + 1);
        table.subjects.emplace_back(name);
      }
      for (auto& video : cohort.videos) {
        table.stim.push_back(center_per_video(video.feature));
        table.events_s.push_back(video.event_times_s);
      }
    }
    table.tasks.push_back(spec.name);

    std::vector<std::vector<TimeSeriesMatrix>> task_eeg;
    std::vector<std::vector<FixationMask>> task_mask;
    std::vector<FixationMask> premargin;
    for (std::size_t s = 0; s < cohort.eeg.size(); ++s) {
      std::vector<TimeSeriesMatrix> row;
      std::vector<FixationMask> mask_row;
      for (std::size_t v = 0; v < cohort.eeg[s].size(); ++v) {
        row.push_back(center_per_video(cohort.eeg[s][v]));
        if (want_mask) {
          const SynthGaze& gz = cohort.gaze[s][v];
          const FixationLabels labels =
              detect_fixation_mask(gz.samples, eps, cfg.dbscan_min_pts);
          FixationMask m = mask_to_signal_rate(labels.labels, scfg.gaze_rate_hz, table.rate_hz,
                                               row.back().n_samples(), table.videos[v]);
          premargin.push_back(m);
          mask_row.push_back(apply_margin(m, cfg.margin_s));
        }
      }
      task_eeg.push_back(std::move(row));
      task_mask.push_back(std::move(mask_row));
    }
    table.eeg.push_back(std::move(task_eeg));
    table.mask.push_back(std::move(task_mask));
    if (want_mask) {
      const auto [mean_pct, std_pct] = gaze_shift_stats(premargin);
      table.gaze_stats.push_back({spec.name, mean_pct, std_pct});
    }
  }
  return table;
}

inline CohortTable stage_manifest(const ExperimentConfig& cfg) {
  CohortTable table;
  require(!cfg.manifest.empty(), errc::manifest_error, "empty manifest");
  const double eps = cfg.dbscan_eps_frac * std::hypot(cfg.screen_w, cfg.screen_h);

  for (const auto& task : cfg.manifest) {
    require(!task.subjects.empty(), errc::manifest_error,
            "task '" + task.name + "' has no subjects");
    if (table.tasks.empty()) {
      for (const auto& subject : task.subjects) table.subjects.push_back(subject.id);
      for (const auto& v : task.subjects.front().videos) table.videos.push_back(v.id);
    }
    require(task.subjects.size() == table.subjects.size(), errc::manifest_error,
            "task '" + task.name + "': subject count differs between tasks");
    table.tasks.push_back(task.name);

    std::vector<std::vector<TimeSeriesMatrix>> task_eeg;
    std::vector<std::vector<FixationMask>> task_mask;
    std::vector<FixationMask> premargin;
    for (std::size_t s = 0; s < task.subjects.size(); ++s) {
      const auto& subject = task.subjects[s];
      require(subject.id == table.subjects[s], errc::manifest_error,
              "subject ids differ between tasks");
      require(subject.videos.size() == table.videos.size(), errc::manifest_error,
              "subject '" + subject.id + "': video count differs");
      std::vector<TimeSeriesMatrix> row;
      std::vector<FixationMask> mask_row;
      for (std::size_t v = 0; v < subject.videos.size(); ++v) {
        const auto& paths = subject.videos[v];
        require(paths.id == table.videos[v], errc::manifest_error,
                "video ids differ between subjects");
        TimeSeriesMatrix eeg = load_timeseries(paths.eeg);
        eeg.video_id = paths.id;
        if (cfg.preprocess) eeg = preprocess_chain(std::move(eeg), *cfg.preprocess);
        if (table.rate_hz == 0.0) table.rate_hz = eeg.rate_hz;
        require(eeg.rate_hz == table.rate_hz, errc::manifest_error,
                paths.eeg + ": rate differs from the rest of the cohort");

        if (table.stim.size() < table.videos.size()) {
          TimeSeriesMatrix stim = load_timeseries(paths.stim);
          stim.video_id = paths.id;
          require(stim.n_samples() == eeg.n_samples(), errc::manifest_error,
                  paths.stim + ": stimulus length does not match EEG");
          table.stim.push_back(center_per_video(stim));
          table.events_s.push_back(paths.events_s);
        }

        if (cfg.use_fixation_mask && !paths.gaze.empty()) {
          const std::vector<GazeSample> gaze = load_gaze_csv(paths.gaze);
          require(gaze.size() >= 2, errc::no_gaze_data, paths.gaze + ": too few samples");
          const double gaze_rate = static_cast<double>(gaze.size() - 1) /
                                   (gaze.back().t - gaze.front().t);
          const FixationLabels labels = detect_fixation_mask(gaze, eps, cfg.dbscan_min_pts);
          FixationMask m = mask_to_signal_rate(labels.labels, gaze_rate, table.rate_hz,
                                               eeg.n_samples(), paths.id);
          premargin.push_back(m);
          mask_row.push_back(apply_margin(m, cfg.margin_s));
        } else if (cfg.use_fixation_mask) {
          FixationMask m;
          m.rate_hz = table.rate_hz;
          m.video_id = paths.id;
          m.flags.assign(static_cast<std::size_t>(eeg.n_samples()), true);
          m.blink.assign(static_cast<std::size_t>(eeg.n_samples()), false);
          premargin.push_back(m);
          mask_row.push_back(std::move(m));
        }
        row.push_back(center_per_video(eeg));
      }
      task_eeg.push_back(std::move(row));
      task_mask.push_back(std::move(mask_row));
    }
    table.eeg.push_back(std::move(task_eeg));
    table.mask.push_back(std::move(task_mask));
    if (!premargin.empty()) {
      const auto [mean_pct, std_pct] = gaze_shift_stats(premargin);
      table.gaze_stats.push_back({task.name, mean_pct, std_pct});
    }
  }
  return table;
}

inline TimeSeriesMatrix embed_centered(const TimeSeriesMatrix& ts, const LagSpec& spec) {
  return center_per_video(lag_embed(ts, spec));
}

/// keep[t] = false within event_exclusion_s of any event.
inline std::vector<bool> event_keep_mask(const std::vector<double>& events_s, double rate_hz,
                                         Eigen::Index t_len, double exclusion_s) {
  std::vector<bool> keep(static_cast<std::size_t>(t_len), true);
  if (exclusion_s <= 0.0) return keep;
  for (const double ev : events_s) {
    const auto lo = static_cast<Eigen::Index>(std::floor((ev - exclusion_s) * rate_hz));
    const auto hi = static_cast<Eigen::Index>(std::ceil((ev + exclusion_s) * rate_hz));
    for (Eigen::Index t = std::max<Eigen::Index>(0, lo); t <= hi && t < t_len; ++t)
      keep[static_cast<std::size_t>(t)] = false;
  }
  Eigen::Index kept = 0;
  for (const bool b : keep) kept += b ? 1 : 0;
  if (kept < 2) return std::vector<bool>(static_cast<std::size_t>(t_len), true);
  return keep;
}

}  // namespace detail

/// Full experiment: stage data, leave-one-video-out folds, per-subject CCA
/// decoding with circular-permutation nulls, per-task CorrCA ISC with
/// phase-scramble surrogates, rank tests between tasks.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  detail::CohortTable table = cfg.use_synth ? detail::stage_synth(cfg)
                                            : detail::stage_manifest(cfg);
  const std::size_t n_tasks = table.tasks.size();
  const std::size_t n_subj = table.subjects.size();
  const std::size_t n_vid = table.videos.size();
  require(n_vid >= 2, errc::too_few_videos, "need at least two videos");

  const FoldPlan plan = plan_folds(table.videos);
  const auto win_len = static_cast<Eigen::Index>(std::llround(cfg.win_s * table.rate_hz));

  // Per-video covariance contributions; folds merge the relevant subsets.
  // cca_cov[task][subject][video], corrca_cov[task][video]
  std::vector<std::vector<std::vector<CcaCov>>> cca_cov(
      n_tasks, std::vector<std::vector<CcaCov>>(n_subj, std::vector<CcaCov>(n_vid)));
  std::vector<std::vector<CorrCaCov>> corrca_cov(n_tasks, std::vector<CorrCaCov>(n_vid));
  std::vector<TimeSeriesMatrix> stim_emb;
  for (std::size_t v = 0; v < n_vid; ++v)
    stim_emb.push_back(detail::embed_centered(table.stim[v], cfg.cca_stim));

  parallel_for(n_tasks * n_vid, cfg.threads, [&](std::size_t tv) {
    const std::size_t t = tv / n_vid, v = tv % n_vid;
    std::vector<Eigen::MatrixXd> corrca_blocks;
    for (std::size_t s = 0; s < n_subj; ++s) {
      const TimeSeriesMatrix& eeg = table.eeg[t][s][v];
      const TimeSeriesMatrix emb = detail::embed_centered(eeg, cfg.cca_eeg);
      cca_cov[t][s][v].add(emb.samples, stim_emb[v].samples, table.videos[v]);
      corrca_blocks.push_back(detail::embed_centered(eeg, cfg.corrca_eeg).samples);
    }
    if (n_subj >= 2) corrca_cov[t][v].add(corrca_blocks, table.videos[v]);
  });

  // Accumulators across folds.
  struct MmAgg {
    std::size_t correct = 0, total = 0;
    // Null draws pool folds with the same trial weights as the observed
    // accuracy, so both sides compute the same statistic.
    std::vector<double> null_sum;  // per draw index, trial-weighted over folds
    double null_weight = 0.0;
  };
  std::vector<std::vector<MmAgg>> mm_agg(n_tasks, std::vector<MmAgg>(n_subj));
  std::vector<std::vector<double>> isc_fold(n_tasks);        // per task, per fold
  std::vector<std::vector<double>> isc_fold_bound(n_tasks);  // per task, per fold
  // Sample-keep masks per (task, fold), reused by the pooled surrogate pass.
  std::vector<std::vector<std::vector<bool>>> isc_keep(n_tasks);
  std::map<std::pair<std::string, std::string>, std::vector<TrialLogRow>> trial_logs;
  for (std::size_t t = 0; t < n_tasks; ++t)
    for (std::size_t s = 0; s < n_subj; ++s)
      trial_logs[{table.tasks[t], table.subjects[s]}];
  int leakage_checked = 0;
  bool leakage_passed = true;
  std::mutex audit_mutex;

  auto audit_videos = [&](const std::vector<std::string>& used, const std::string& test) {
    const std::lock_guard<std::mutex> lock(audit_mutex);
    ++leakage_checked;
    for (const std::string& v : used)
      if (v == test) leakage_passed = false;
  };

  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const std::string& test_video = plan.folds[f].test;
    const std::size_t w = f;  // plan_folds preserves video order

    // CCA models: one per subject under aggregate scope, else per task.
    std::vector<std::vector<CcaModel>> models(cfg.aggregate_tasks ? 1 : n_tasks,
                                              std::vector<CcaModel>(n_subj));
    parallel_for(n_subj, cfg.threads, [&](std::size_t s) {
      if (cfg.aggregate_tasks) {
        CcaCov merged;
        for (std::size_t t = 0; t < n_tasks; ++t)
          for (std::size_t v = 0; v < n_vid; ++v)
            if (v != w) merged.merge(cca_cov[t][s][v]);
        audit_videos(merged.videos(), test_video);
        models[0][s] = fit_cca_cov(merged, cfg.cca_k, cfg.reg_lambda, cfg.cca_eeg, cfg.cca_stim);
      } else {
        for (std::size_t t = 0; t < n_tasks; ++t) {
          CcaCov merged;
          for (std::size_t v = 0; v < n_vid; ++v)
            if (v != w) merged.merge(cca_cov[t][s][v]);
          audit_videos(merged.videos(), test_video);
          models[t][s] =
              fit_cca_cov(merged, cfg.cca_k, cfg.reg_lambda, cfg.cca_eeg, cfg.cca_stim);
        }
      }
    });

    for (std::size_t t = 0; t < n_tasks; ++t) {
      const TimeSeriesMatrix& y_emb = stim_emb[w];

      parallel_for(n_subj, cfg.threads, [&](std::size_t s) {
        const CcaModel& model = models[cfg.aggregate_tasks ? 0 : t][s];
        const TimeSeriesMatrix x_emb = detail::embed_centered(table.eeg[t][s][w], cfg.cca_eeg);
        const Eigen::MatrixXd px = project_x(model, x_emb);
        const Eigen::MatrixXd py = project_y(model, y_emb);
        const int n_comp = std::min(2, model.k());

        FixationMask usable;
        if (cfg.use_fixation_mask && !table.mask[t][s].empty()) {
          usable = table.mask[t][s][w];
        } else {
          usable.rate_hz = table.rate_hz;
          usable.video_id = test_video;
          usable.flags.assign(static_cast<std::size_t>(x_emb.n_samples()), true);
          usable.blink.assign(static_cast<std::size_t>(x_emb.n_samples()), false);
        }

        std::vector<SegmentSpec> segments;
        try {
          segments = sample_segments(
              usable, cfg.win_s, cfg.mean_interval_s,
              derive_seed(cfg.seed, "segments", t, s, f));
        } catch (const error& e) {
          if (e.kind() != errc::no_usable_window) throw;
          return;  // no usable windows in this fold for this subject
        }

        auto window_score = [&](Eigen::Index eeg_start, Eigen::Index stim_start) {
          double sum = 0.0;
          for (int c = 0; c < n_comp; ++c)
            sum += pearson(px.col(c).segment(eeg_start, win_len),
                           py.col(c).segment(stim_start, win_len));
          return sum;
        };

        rng trial_rng(derive_seed(cfg.seed, "trials", t, s, f));
        std::vector<MmTrial> trials;
        for (const SegmentSpec& seg : segments) {
          try {
            trials.push_back(make_trial(seg, segments, trial_rng));
          } catch (const error& e) {
            if (e.kind() != errc::no_valid_mismatch) throw;
          }
        }
        if (trials.empty()) return;
        assign_balanced_order(trials, trial_rng);

        MmAgg& agg = mm_agg[t][s];
        std::vector<TrialLogRow>& log =
            trial_logs.at({table.tasks[t], table.subjects[s]});
        for (const MmTrial& trial : trials) {
          const double sm = window_score(trial.eeg_segment.start, trial.match.start);
          const double smm = window_score(trial.eeg_segment.start, trial.mismatch.start);
          const bool picked = sm > smm;
          agg.correct += picked ? 1 : 0;
          ++agg.total;
          log.push_back({static_cast<int>(f), test_video, trial.match.start,
                         trial.mismatch.start, sm, smm, picked});
        }

        if (segments.size() >= 3) {
          std::vector<Eigen::Index> starts;
          for (const SegmentSpec& seg : segments) starts.push_back(seg.start);
          const NullDistribution null = build_mm_null(
              starts, win_len,
              [&](std::size_t i, std::size_t a, std::size_t b) {
                return window_score(starts[i], starts[a]) > window_score(starts[i], starts[b])
                           ? 0
                           : 1;
              },
              cfg.n_perm, derive_seed(cfg.seed, "mm_null", t, s, f));
          const auto w_f = static_cast<double>(trials.size());
          if (agg.null_sum.empty()) agg.null_sum.assign(null.n(), 0.0);
          const std::size_t n_draws = std::min(agg.null_sum.size(), null.n());
          agg.null_sum.resize(n_draws);
          for (std::size_t d = 0; d < n_draws; ++d) agg.null_sum[d] += w_f * null.values[d];
          agg.null_weight += w_f;
        }
      });

      // CorrCA + ISC for this task and fold.
      if (n_subj >= 2) {
        CorrCaCov merged;
        for (std::size_t v = 0; v < n_vid; ++v)
          if (v != w) merged.merge(corrca_cov[t][v]);
        audit_videos(merged.videos(), test_video);
        const CorrCaModel model =
            fit_corrca_cov(merged, cfg.corrca_k, cfg.reg_lambda, cfg.corrca_eeg);

        std::vector<TimeSeriesMatrix> raw;  // centered, un-embedded test series
        std::vector<TimeSeriesMatrix> test_emb;
        for (std::size_t s = 0; s < n_subj; ++s) {
          raw.push_back(table.eeg[t][s][w]);
          test_emb.push_back(detail::embed_centered(raw.back(), cfg.corrca_eeg));
        }
        std::vector<bool> keep = detail::event_keep_mask(
            table.events_s[w], table.rate_hz, test_emb.front().n_samples(),
            cfg.event_exclusion_s);
        if (cfg.corrca_use_mask && cfg.use_fixation_mask && !table.mask[t].front().empty()) {
          for (std::size_t s = 0; s < n_subj; ++s) {
            const FixationMask& m = table.mask[t][s][w];
            for (std::size_t i = 0; i < keep.size() && i < m.flags.size(); ++i)
              if (!m.flags[i]) keep[i] = false;
          }
        }
        const std::vector<bool>* keep_ptr = &keep;
        auto statistic = [&](const std::vector<TimeSeriesMatrix>& subjects) {
          std::vector<TimeSeriesMatrix> embedded;
          embedded.reserve(subjects.size());
          for (const TimeSeriesMatrix& s : subjects)
            embedded.push_back(detail::embed_centered(s, cfg.corrca_eeg));
          return model.k() >= 2 ? isc_sum_first2(model, embedded, keep_ptr)
                                : isc(model, embedded, 1, keep_ptr);
        };

        isc_fold[t].push_back(model.k() >= 2 ? isc_sum_first2(model, test_emb, keep_ptr)
                                             : isc(model, test_emb, 1, keep_ptr));
        const NullDistribution null =
            build_isc_null(raw, statistic, cfg.n_surr, derive_seed(cfg.seed, "isc_null", t, f));
        isc_fold_bound[t].push_back(nearest_rank_percentile(null.values, cfg.percentile));
        isc_keep[t].push_back(std::move(keep));
      }
    }
  }

  // Assemble the report.
  RunReport report;
  report.seed = cfg.seed;
  report.config_hash = cfg.config_hash;
  report.tasks = table.tasks;
  report.subjects = table.subjects;
  report.videos = table.videos;
  report.gaze = table.gaze_stats;
  report.leakage_folds_checked = leakage_checked;
  report.leakage_passed = leakage_passed;
  report.trial_logs = std::move(trial_logs);

  std::vector<std::vector<double>> acc(n_tasks, std::vector<double>(n_subj, 0.0));
  for (std::size_t t = 0; t < n_tasks; ++t) {
    std::vector<double> pooled_null;
    for (std::size_t s = 0; s < n_subj; ++s) {
      const MmAgg& agg = mm_agg[t][s];
      MmEntry entry;
      entry.task = table.tasks[t];
      entry.subject = table.subjects[s];
      entry.n_trials = static_cast<int>(agg.total);
      entry.accuracy = agg.total > 0
                           ? static_cast<double>(agg.correct) / static_cast<double>(agg.total)
                           : std::numeric_limits<double>::quiet_NaN();
      acc[t][s] = entry.accuracy;
      std::vector<double> null_mean;
      for (const double sum : agg.null_sum) null_mean.push_back(sum / agg.null_weight);
      entry.null_n = static_cast<int>(null_mean.size());
      if (null_mean.empty()) {
        entry.bound = std::numeric_limits<double>::quiet_NaN();
        entry.bound_lo = entry.bound;
      } else {
        entry.bound = nearest_rank_percentile(null_mean, cfg.percentile);
        entry.bound_lo =
            nearest_rank_percentile(null_mean, std::max(100.0 - cfg.percentile, 1e-9));
      }
      pooled_null.insert(pooled_null.end(), null_mean.begin(), null_mean.end());
      report.mm.push_back(std::move(entry));
    }
    report.mm_pooled_bound[table.tasks[t]] =
        pooled_null.empty() ? std::numeric_limits<double>::quiet_NaN()
                            : nearest_rank_percentile(pooled_null, cfg.percentile);

    if (!isc_fold[t].empty()) {
      IscEntry entry;
      entry.task = table.tasks[t];
      entry.per_fold = isc_fold[t];
      entry.per_fold_bound = isc_fold_bound[t];
      entry.mean_isc = std::accumulate(isc_fold[t].begin(), isc_fold[t].end(), 0.0) /
                       static_cast<double>(isc_fold[t].size());

      // Bound for the fold mean: scramble the whole task cohort per draw and
      // refit every fold's model on the scrambled training videos. Folds share
      // training videos, which couples their observed statistics; surrogates
      // must pass through the same fitting path to stay exchangeable with the
      // observed fold mean under the null.
      std::vector<double> pooled(static_cast<std::size_t>(std::max(cfg.n_surr, 0)), 0.0);
      parallel_for(pooled.size(), cfg.threads, [&](std::size_t d) {
        std::vector<std::vector<TimeSeriesMatrix>> emb(n_vid);  // [video][subject]
        std::vector<CorrCaCov> cov(n_vid);
        for (std::size_t v = 0; v < n_vid; ++v) {
          std::vector<Eigen::MatrixXd> blocks;
          for (std::size_t s = 0; s < n_subj; ++s) {
            const TimeSeriesMatrix scr = phase_scramble(
                table.eeg[t][s][v],
                SurrogateSeed{derive_seed(cfg.seed, "isc_pool", t, s, v),
                              static_cast<std::uint64_t>(d)});
            emb[v].push_back(detail::embed_centered(scr, cfg.corrca_eeg));
            blocks.push_back(emb[v].back().samples);
          }
          cov[v].add(blocks, table.videos[v]);
        }
        double sum = 0.0;
        for (std::size_t f = 0; f < n_vid; ++f) {
          CorrCaCov merged;
          for (std::size_t v = 0; v < n_vid; ++v)
            if (v != f) merged.merge(cov[v]);
          const CorrCaModel m =
              fit_corrca_cov(merged, cfg.corrca_k, cfg.reg_lambda, cfg.corrca_eeg);
          const std::vector<bool>* kp = &isc_keep[t][f];
          sum += m.k() >= 2 ? isc_sum_first2(m, emb[f], kp) : isc(m, emb[f], 1, kp);
        }
        pooled[d] = sum / static_cast<double>(n_vid);
      });
      entry.n_surr = static_cast<int>(pooled.size());
      entry.bound = pooled.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : nearest_rank_percentile(pooled, cfg.percentile);
      report.isc.push_back(std::move(entry));
    }
  }

  auto compare = [&](const std::string& metric, std::size_t ta, std::size_t tb,
                     const std::vector<double>& a, const std::vector<double>& b) {
    RankComparison cmp;
    cmp.metric = metric;
    cmp.a = table.tasks[ta];
    cmp.b = table.tasks[tb];
    std::vector<double> va, vb;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
      if (std::isfinite(a[i]) && std::isfinite(b[i])) {
        va.push_back(a[i]);
        vb.push_back(b[i]);
      }
    cmp.n = static_cast<int>(va.size());
    if (!va.empty()) {
      try {
        cmp.p = wilcoxon_signed_rank(va, vb);
      } catch (const error& e) {
        if (e.kind() != errc::too_few_pairs) throw;
      }
    }
    report.comparisons.push_back(std::move(cmp));
  };
  for (std::size_t t = 0; t + 1 < n_tasks; ++t) {
    compare("mm_accuracy", t, t + 1, acc[t], acc[t + 1]);
    if (isc_fold[t].size() == isc_fold[t + 1].size() && !isc_fold[t].empty())
      compare("isc_sum2", t, t + 1, isc_fold[t], isc_fold[t + 1]);
  }
  return report;
}

}  // namespace ntk
