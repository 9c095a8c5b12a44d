// Command-line front end: preprocessing, fixation masks, synthetic
// cohorts, model fitting, decoding, ISC, and the full experiment runner.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ntk/ntk.hpp"

namespace {

using nlohmann::json;

ntk::TimeSeriesMatrix load_any(const std::string& path, double csv_rate) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    ntk::require(csv_rate > 0.0, ntk::errc::config_invalid,
                 "--rate is required for CSV input");
    return ntk::load_timeseries_csv(path, csv_rate);
  }
  return ntk::load_timeseries(path);
}

double infer_gaze_rate(const std::vector<ntk::GazeSample>& gaze) {
  ntk::require(gaze.size() >= 2, ntk::errc::no_gaze_data, "too few gaze samples");
  return static_cast<double>(gaze.size() - 1) / (gaze.back().t - gaze.front().t);
}

ntk::TimeSeriesMatrix embed_centered(const ntk::TimeSeriesMatrix& ts, const ntk::LagSpec& spec) {
  return ntk::center_per_video(ntk::lag_embed(ntk::center_per_video(ts), spec));
}

ntk::TimeSeriesMatrix slice_rows(const ntk::TimeSeriesMatrix& ts, Eigen::Index start,
                                 Eigen::Index len) {
  ntk::TimeSeriesMatrix out;
  out.rate_hz = ts.rate_hz;
  out.video_id = ts.video_id;
  out.samples = ts.samples.middleRows(start, len);
  return out;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

int cmd_preprocess(const std::string& in, const std::string& out, double csv_rate,
                   const ntk::PreprocessParams& params) {
  ntk::TimeSeriesMatrix ts = load_any(in, csv_rate);
  ts = ntk::preprocess_chain(std::move(ts), params);
  ntk::store_timeseries(ts, out);
  json summary = {{"n_samples", ts.n_samples()},
                  {"n_channels", ts.n_channels()},
                  {"rate_hz", ts.rate_hz}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_fixation(const std::string& gaze_path, const std::string& out, double rate, long long len,
                 double eps_frac, int min_pts, double screen_w, double screen_h, double margin) {
  const std::vector<ntk::GazeSample> gaze = ntk::load_gaze_csv(gaze_path);
  const double gaze_rate = infer_gaze_rate(gaze);
  const double eps = eps_frac * std::hypot(screen_w, screen_h);
  const ntk::FixationLabels labels = ntk::detect_fixation_mask(gaze, eps, min_pts);
  ntk::FixationMask mask = ntk::mask_to_signal_rate(labels.labels, gaze_rate, rate,
                                                    static_cast<Eigen::Index>(len));
  const auto [mean_pct, std_pct] = ntk::gaze_shift_stats({mask});
  mask = ntk::apply_margin(mask, margin);
  ntk::store_mask_json(mask, out);

  std::size_t usable = 0;
  for (const bool b : mask.flags) usable += b ? 1 : 0;
  json summary = {{"n_gaze", gaze.size()},
                  {"gaze_rate_hz", gaze_rate},
                  {"pct_excluded_pre_margin", mean_pct},
                  {"pct_excluded_std", std_pct},
                  {"usable_after_margin", usable},
                  {"n_bins", mask.flags.size()}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out,
                 std::optional<std::uint64_t> seed) {
  ntk::ExperimentConfig cfg = ntk::parse_config(ntk::parse_json_file(config_path));
  ntk::require(cfg.use_synth, ntk::errc::config_invalid,
               "simulate needs a config with a synth block");
  if (seed) cfg.seed = *seed;
  std::filesystem::create_directories(out);

  json manifest_tasks = json::array();
  bool stim_written = false;
  for (const auto& spec : cfg.synth_tasks) {
    ntk::SynthCohortConfig scfg = cfg.synth_base;
    scfg.task_label = spec.name;
    scfg.attention_gain = spec.attention_gain;
    scfg.eccentricity_profile = spec.profile;
    scfg.ecc_attenuation = spec.ecc_attenuation;
    scfg.seed = cfg.seed;
    const ntk::SynthCohort cohort = ntk::gen_cohort(scfg);

    if (!stim_written) {
      for (std::size_t v = 0; v < cohort.videos.size(); ++v)
        ntk::store_timeseries(cohort.videos[v].feature,
                              join_path(out, "stim_" + cohort.video_ids[v] + ".ntk1"));
      stim_written = true;
    }
    json subjects = json::array();
    for (std::size_t s = 0; s < cohort.eeg.size(); ++s) {
      char sid[16];
      std::snprintf(sid, sizeof(sid), "s%02zu", s + 1);
      json videos = json::array();
      for (std::size_t v = 0; v < cohort.eeg[s].size(); ++v) {
        const std::string base = spec.name + "_" + sid + "_" + cohort.video_ids[v];
        const std::string eeg_path = join_path(out, "eeg_" + base + ".ntk1");
        ntk::store_timeseries(cohort.eeg[s][v], eeg_path);
        json entry = {{"id", cohort.video_ids[v]},
                      {"eeg", eeg_path},
                      {"stim", join_path(out, "stim_" + cohort.video_ids[v] + ".ntk1")},
                      {"events", cohort.videos[v].event_times_s}};
        if (!cohort.gaze.empty()) {
          const std::string gaze_path = join_path(out, "gaze_" + base + ".csv");
          ntk::store_gaze_csv(cohort.gaze[s][v].samples, gaze_path);
          entry["gaze"] = gaze_path;
        }
        videos.push_back(std::move(entry));
      }
      subjects.push_back({{"id", sid}, {"videos", std::move(videos)}});
    }
    manifest_tasks.push_back({{"name", spec.name}, {"subjects", std::move(subjects)}});
  }

  // Companion config: the same experiment driven from the written files.
  json run_cfg = {{"seed", cfg.seed},
                  {"reg_lambda", cfg.reg_lambda},
                  {"percentile", cfg.percentile},
                  {"threads", cfg.threads},
                  {"event_exclusion_s", cfg.event_exclusion_s},
                  {"train_scope", cfg.aggregate_tasks ? "aggregate" : "single-task"},
                  {"cca",
                   {{"eeg_lags", cfg.cca_eeg.num_lags},
                    {"eeg_offset", cfg.cca_eeg.offset},
                    {"stim_lags", cfg.cca_stim.num_lags},
                    {"stim_offset", cfg.cca_stim.offset},
                    {"k", cfg.cca_k}}},
                  {"corrca",
                   {{"eeg_lags", cfg.corrca_eeg.num_lags},
                    {"eeg_offset", cfg.corrca_eeg.offset},
                    {"k", cfg.corrca_k}}},
                  {"segments", {{"win_s", cfg.win_s}, {"mean_interval_s", cfg.mean_interval_s}}},
                  {"nulls", {{"n_perm", cfg.n_perm}, {"n_surr", cfg.n_surr}}},
                  {"fixation",
                   {{"use_mask", cfg.use_fixation_mask},
                    {"corrca_use_mask", cfg.corrca_use_mask},
                    {"margin_s", cfg.margin_s},
                    {"eps_frac_diag", cfg.dbscan_eps_frac},
                    {"min_pts", cfg.dbscan_min_pts},
                    {"screen_w", cfg.screen_w},
                    {"screen_h", cfg.screen_h}}},
                  {"manifest", {{"tasks", std::move(manifest_tasks)}}}};
  ntk::write_text_file(join_path(out, "run_config.json"), run_cfg.dump(2) + "\n");
  std::cout << json{{"out", out}, {"config", join_path(out, "run_config.json")}}.dump() << "\n";
  return 0;
}

int cmd_fit_cca(const std::vector<std::string>& eeg_files, const std::vector<std::string>& stim_files,
                const std::string& out, const ntk::LagSpec& eeg_spec, const ntk::LagSpec& stim_spec,
                int k, double lambda, double csv_rate) {
  ntk::require(eeg_files.size() == stim_files.size() && !eeg_files.empty(),
               ntk::errc::config_invalid, "need matching --eeg and --stim lists");
  ntk::CcaCov cov;
  for (std::size_t i = 0; i < eeg_files.size(); ++i) {
    const ntk::TimeSeriesMatrix x = embed_centered(load_any(eeg_files[i], csv_rate), eeg_spec);
    const ntk::TimeSeriesMatrix y = embed_centered(load_any(stim_files[i], csv_rate), stim_spec);
    cov.add(x.samples, y.samples, x.video_id.empty() ? eeg_files[i] : x.video_id);
  }
  const ntk::CcaModel model = ntk::fit_cca_cov(cov, k, lambda, eeg_spec, stim_spec);
  ntk::store_cca_model(model, out);
  std::cout << json{{"k", model.k()}, {"train_correlations", model.train_correlations}}.dump()
            << "\n";
  return 0;
}

int cmd_fit_corrca(const std::vector<std::string>& subject_lists, const std::string& out,
                   const ntk::LagSpec& spec, int k, double lambda, double csv_rate) {
  std::vector<std::vector<std::string>> files;
  std::size_t n_videos = 0;
  for (const std::string& list : subject_lists) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= list.size()) {
      const std::size_t comma = list.find(',', pos);
      parts.push_back(list.substr(pos, comma == std::string::npos ? std::string::npos
                                                                  : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (n_videos == 0) n_videos = parts.size();
    ntk::require(parts.size() == n_videos && n_videos > 0, ntk::errc::config_invalid,
                 "subjects must list the same videos");
    files.push_back(std::move(parts));
  }
  ntk::CorrCaCov cov;
  for (std::size_t v = 0; v < n_videos; ++v) {
    std::vector<Eigen::MatrixXd> blocks;
    for (const auto& subject : files)
      blocks.push_back(embed_centered(load_any(subject[v], csv_rate), spec).samples);
    cov.add(blocks, files.front()[v]);
  }
  const ntk::CorrCaModel model = ntk::fit_corrca_cov(cov, k, lambda, spec);
  ntk::store_corrca_model(model, out);
  std::cout << json{{"k", model.k()}, {"eigenvalues", model.eigenvalues}}.dump() << "\n";
  return 0;
}

int cmd_decode(const std::string& model_path, const std::string& eeg_path,
               const std::string& stim_path, const std::string& mask_path, const std::string& out,
               double win_s, double interval_s, std::uint64_t seed, double csv_rate) {
  const ntk::CcaModel model = ntk::load_cca_model(model_path);
  const ntk::TimeSeriesMatrix eeg = load_any(eeg_path, csv_rate);
  const ntk::TimeSeriesMatrix x = embed_centered(eeg, model.eeg_spec);
  const ntk::TimeSeriesMatrix y = embed_centered(load_any(stim_path, csv_rate), model.stim_spec);

  ntk::FixationMask usable;
  if (!mask_path.empty()) {
    usable = ntk::load_mask_json(mask_path);
    ntk::require(static_cast<Eigen::Index>(usable.flags.size()) == x.n_samples(),
                 ntk::errc::length_mismatch, "mask length does not match the recording");
  } else {
    usable.rate_hz = eeg.rate_hz;
    usable.flags.assign(static_cast<std::size_t>(x.n_samples()), true);
    usable.blink.assign(static_cast<std::size_t>(x.n_samples()), false);
  }

  const std::vector<ntk::SegmentSpec> segments =
      ntk::sample_segments(usable, win_s, interval_s, ntk::derive_seed(seed, "segments"));
  ntk::rng r(ntk::derive_seed(seed, "trials"));
  std::vector<ntk::MmTrial> trials;
  for (const ntk::SegmentSpec& seg : segments) {
    try {
      trials.push_back(ntk::make_trial(seg, segments, r));
    } catch (const ntk::error& e) {
      if (e.kind() != ntk::errc::no_valid_mismatch) throw;
    }
  }
  ntk::require(!trials.empty(), ntk::errc::empty_trials, "no decodable trials");
  ntk::assign_balanced_order(trials, r);

  std::vector<ntk::TrialLogRow> rows;
  std::size_t correct = 0;
  for (const ntk::MmTrial& trial : trials) {
    const ntk::TrialResult res = ntk::decode_trial(
        model, slice_rows(x, trial.eeg_segment.start, trial.eeg_segment.length),
        slice_rows(y, trial.match.start, trial.match.length),
        slice_rows(y, trial.mismatch.start, trial.mismatch.length));
    correct += res.picked_match ? 1 : 0;
    rows.push_back({0, eeg.video_id, trial.match.start, trial.mismatch.start, res.score_match,
                    res.score_mismatch, res.picked_match});
  }
  ntk::store_trial_log(rows, out);
  std::cout << json{{"n_trials", trials.size()},
                    {"accuracy", static_cast<double>(correct) / static_cast<double>(trials.size())}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_isc(const std::string& model_path, const std::vector<std::string>& eeg_files,
            const std::string& out, int n_surr, std::uint64_t seed, double percentile,
            double csv_rate) {
  const ntk::CorrCaModel model = ntk::load_corrca_model(model_path);
  std::vector<ntk::TimeSeriesMatrix> raw, embedded;
  for (const std::string& f : eeg_files) {
    raw.push_back(ntk::center_per_video(load_any(f, csv_rate)));
    embedded.push_back(ntk::center_per_video(ntk::lag_embed(raw.back(), model.eeg_spec)));
  }
  auto statistic = [&](const std::vector<ntk::TimeSeriesMatrix>& subjects) {
    std::vector<ntk::TimeSeriesMatrix> emb;
    for (const ntk::TimeSeriesMatrix& s : subjects)
      emb.push_back(ntk::center_per_video(ntk::lag_embed(s, model.eeg_spec)));
    return model.k() >= 2 ? ntk::isc_sum_first2(model, emb) : ntk::isc(model, emb, 1);
  };
  const double observed =
      model.k() >= 2 ? ntk::isc_sum_first2(model, embedded) : ntk::isc(model, embedded, 1);
  const ntk::NullDistribution null = ntk::build_isc_null(raw, statistic, n_surr, seed);
  if (!out.empty()) ntk::store_null_json(null, out);
  std::cout << json{{"isc", observed},
                    {"bound", null.percentile(percentile)},
                    {"n_surr", null.n()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out,
            std::optional<std::uint64_t> seed, std::optional<int> threads) {
  ntk::ExperimentConfig cfg = ntk::parse_config(ntk::parse_json_file(config_path));
  if (seed) {
    cfg.seed = *seed;
    cfg.synth_base.seed = *seed;
  }
  if (threads) cfg.threads = *threads;
  const ntk::RunReport report = ntk::run_experiment(cfg);
  ntk::report_render(report, out);
  json summary = {{"out", out},
                  {"tasks", report.tasks.size()},
                  {"subjects", report.subjects.size()},
                  {"folds", report.videos.size()},
                  {"leakage_passed", report.leakage_passed}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_report(const std::string& in, const std::string& out) {
  const ntk::RunReport report = ntk::report_from_json(ntk::parse_json_file(in));
  ntk::report_render(report, out);
  std::cout << json{{"out", out}}.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG-video neural tracking toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed_opt;
  std::optional<int> threads_opt;
  app.add_option("--seed", seed_opt, "override the config seed");
  app.add_option("--threads", threads_opt, "worker thread count");

  double csv_rate = 0.0;
  app.add_option("--rate", csv_rate, "sample rate for CSV inputs (Hz)");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "filter, resample, clean a recording");
  std::string pre_in, pre_out;
  ntk::PreprocessParams pre_params;
  pre->add_option("--in", pre_in)->required();
  pre->add_option("--out", pre_out)->required();
  pre->add_option("--highpass", pre_params.highpass_hz, "high-pass cutoff (Hz)");
  pre->add_option("--notch", pre_params.notch_hz, "notch frequency (Hz)");
  pre->add_option("--target-rate", pre_params.target_rate_hz, "downsample target (Hz)");
  pre->add_flag("--average-reference", pre_params.average_reference);
  pre->add_option("--eog", pre_params.eog_channels, "EOG channel labels to regress out");

  // fixation
  auto* fix = app.add_subcommand("fixation", "gaze CSV to fixation mask");
  std::string fix_gaze, fix_out;
  double fix_rate = 30.0, fix_eps = 0.02, fix_w = 1920.0, fix_h = 1080.0, fix_margin = 0.5;
  long long fix_len = 0;
  int fix_minpts = 20;
  fix->add_option("--gaze", fix_gaze)->required();
  fix->add_option("--out", fix_out)->required();
  fix->add_option("--signal-rate", fix_rate, "mask rate (Hz)")->required();
  fix->add_option("--len", fix_len, "mask length in samples")->required();
  fix->add_option("--eps-frac", fix_eps, "DBSCAN eps as fraction of screen diagonal");
  fix->add_option("--min-pts", fix_minpts);
  fix->add_option("--screen-w", fix_w);
  fix->add_option("--screen-h", fix_h);
  fix->add_option("--margin", fix_margin, "exclusion margin (s)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "write a synthetic cohort to disk");
  std::string sim_cfg, sim_out;
  sim->add_option("--config", sim_cfg)->required();
  sim->add_option("--out", sim_out)->required();

  // fit-cca
  auto* fc = app.add_subcommand("fit-cca", "fit stimulus-response filters");
  std::vector<std::string> fc_eeg, fc_stim;
  std::string fc_out;
  int fc_eeg_lags = 3, fc_eeg_off = 1, fc_stim_lags = 15, fc_stim_off = 0, fc_k = 2;
  double fc_lambda = 1e-6;
  fc->add_option("--eeg", fc_eeg)->required();
  fc->add_option("--stim", fc_stim)->required();
  fc->add_option("--out", fc_out)->required();
  fc->add_option("--eeg-lags", fc_eeg_lags);
  fc->add_option("--eeg-offset", fc_eeg_off);
  fc->add_option("--stim-lags", fc_stim_lags);
  fc->add_option("--stim-offset", fc_stim_off);
  fc->add_option("--k", fc_k);
  fc->add_option("--lambda", fc_lambda);

  // fit-corrca
  auto* fr = app.add_subcommand("fit-corrca", "fit shared component filters");
  std::vector<std::string> fr_subjects;
  std::string fr_out;
  int fr_lags = 5, fr_off = 2, fr_k = 2;
  double fr_lambda = 1e-6;
  fr->add_option("--subject", fr_subjects, "comma-separated per-video files, one per subject")
      ->required();
  fr->add_option("--out", fr_out)->required();
  fr->add_option("--lags", fr_lags);
  fr->add_option("--offset", fr_off);
  fr->add_option("--k", fr_k);
  fr->add_option("--lambda", fr_lambda);

  // decode
  auto* dec = app.add_subcommand("decode", "match-mismatch decoding on one recording");
  std::string dec_model, dec_eeg, dec_stim, dec_mask, dec_out;
  double dec_win = 45.0, dec_interval = 2.0;
  std::uint64_t dec_seed = 0;
  dec->add_option("--model", dec_model)->required();
  dec->add_option("--eeg", dec_eeg)->required();
  dec->add_option("--stim", dec_stim)->required();
  dec->add_option("--mask", dec_mask);
  dec->add_option("--out", dec_out)->required();
  dec->add_option("--win", dec_win, "window length (s)");
  dec->add_option("--interval", dec_interval, "mean grid interval (s)");
  dec->add_option("--trial-seed", dec_seed);

  // isc
  auto* is = app.add_subcommand("isc", "inter-subject correlation with surrogate bound");
  std::string is_model, is_out;
  std::vector<std::string> is_eeg;
  int is_nsurr = 500;
  std::uint64_t is_seed = 0;
  double is_pct = 97.5;
  is->add_option("--model", is_model)->required();
  is->add_option("--eeg", is_eeg, "one recording per subject")->required();
  is->add_option("--out", is_out, "surrogate distribution JSON");
  is->add_option("--n-surr", is_nsurr);
  is->add_option("--surr-seed", is_seed);
  is->add_option("--percentile", is_pct);

  // run
  auto* run = app.add_subcommand("run", "full experiment from a config");
  std::string run_cfg, run_out;
  run->add_option("--config", run_cfg)->required();
  run->add_option("--out", run_out)->required();

  // report
  auto* rep = app.add_subcommand("report", "re-render charts from a report JSON");
  std::string rep_in, rep_out;
  rep->add_option("--in", rep_in)->required();
  rep->add_option("--out", rep_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return cmd_preprocess(pre_in, pre_out, csv_rate, pre_params);
    if (fix->parsed())
      return cmd_fixation(fix_gaze, fix_out, fix_rate, fix_len, fix_eps, fix_minpts, fix_w,
                          fix_h, fix_margin);
    if (sim->parsed()) return cmd_simulate(sim_cfg, sim_out, seed_opt);
    if (fc->parsed())
      return cmd_fit_cca(fc_eeg, fc_stim, fc_out, {fc_eeg_lags, fc_eeg_off},
                         {fc_stim_lags, fc_stim_off}, fc_k, fc_lambda, csv_rate);
    if (fr->parsed())
      return cmd_fit_corrca(fr_subjects, fr_out, {fr_lags, fr_off}, fr_k, fr_lambda, csv_rate);
    if (dec->parsed())
      return cmd_decode(dec_model, dec_eeg, dec_stim, dec_mask, dec_out, dec_win, dec_interval,
                        dec_seed, csv_rate);
    if (is->parsed())
      return cmd_isc(is_model, is_eeg, is_out, is_nsurr, is_seed, is_pct, csv_rate);
    if (run->parsed()) return cmd_run(run_cfg, run_out, seed_opt, threads_opt);
    if (rep->parsed()) return cmd_report(rep_in, rep_out);
  } catch (const ntk::error& e) {
    std::cerr << json{{"error", ntk::errc_name(e.kind())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Unhandled"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }
  return 0;
}
