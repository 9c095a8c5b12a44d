#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "ntk/ntk.hpp"

using Catch::Approx;
namespace fs = std::filesystem;

namespace {

nlohmann::json synth_json() {
  return nlohmann::json::parse(R"({
    "seed": 11,
    "segments": {"win_s": 4.0, "mean_interval_s": 2.0},
    "nulls": {"n_perm": 20, "n_surr": 20},
    "synth": {
      "n_subjects": 2,
      "n_videos": 3,
      "video_len_s": 20.0,
      "rate_hz": 30.0,
      "n_channels": 4,
      "tasks": [
        {"name": "low", "attention_gain": 0.5},
        {"name": "high", "attention_gain": 2.0}
      ]
    }
  })");
}

}  // namespace

TEST_CASE("config parser fills defaults and propagates the seed") {
  const ntk::ExperimentConfig cfg = ntk::parse_config(synth_json());
  CHECK(cfg.seed == 11);
  CHECK(cfg.reg_lambda == 1e-6);
  CHECK(cfg.percentile == 97.5);
  CHECK(cfg.threads == 1);
  CHECK(cfg.cca_eeg.num_lags == 3);
  CHECK(cfg.cca_eeg.offset == 1);
  CHECK(cfg.cca_stim.num_lags == 15);
  CHECK(cfg.cca_k == 2);
  CHECK(cfg.corrca_eeg.num_lags == 5);
  CHECK(cfg.win_s == 4.0);
  CHECK(cfg.n_perm == 20);
  CHECK(cfg.use_fixation_mask);
  CHECK_FALSE(cfg.corrca_use_mask);
  CHECK(cfg.aggregate_tasks);
  CHECK(cfg.use_synth);
  CHECK(cfg.synth_base.seed == 11);
  CHECK(cfg.synth_base.n_videos == 3);
  REQUIRE(cfg.synth_tasks.size() == 2);
  CHECK(cfg.synth_tasks[0].name == "low");
  CHECK(cfg.synth_tasks[1].attention_gain == 2.0);
  CHECK(cfg.config_hash != 0);
}

TEST_CASE("config parser rejects unknown keys at every level") {
  auto expect_invalid = [](nlohmann::json j) {
    try {
      ntk::parse_config(j);
      FAIL();
    } catch (const ntk::error& e) {
      CHECK(e.kind() == ntk::errc::config_invalid);
    }
  };
  nlohmann::json j = synth_json();
  j["bogus"] = 1;
  expect_invalid(j);
  j = synth_json();
  j["cca"] = {{"k", 2}, {"bogus", 1}};
  expect_invalid(j);
  j = synth_json();
  j["corrca"] = {{"bogus", 1}};
  expect_invalid(j);
  j = synth_json();
  j["segments"]["bogus"] = 1;
  expect_invalid(j);
  j = synth_json();
  j["nulls"]["bogus"] = 1;
  expect_invalid(j);
  j = synth_json();
  j["fixation"] = {{"bogus", true}};
  expect_invalid(j);
  j = synth_json();
  j["synth"]["bogus"] = 1;
  expect_invalid(j);
  j = synth_json();
  j["synth"]["tasks"][0]["bogus"] = 1;
  expect_invalid(j);
  j = synth_json();
  j["preprocess"] = {{"bogus", 1}};
  expect_invalid(j);
}

TEST_CASE("config parser enforces exactly one data source and a known train scope") {
  nlohmann::json none = synth_json();
  none.erase("synth");
  try {
    ntk::parse_config(none);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::config_invalid);
  }

  nlohmann::json both = synth_json();
  both["manifest"] = {{"tasks", nlohmann::json::array(
      {{{"name", "t"},
        {"subjects", nlohmann::json::array(
            {{{"id", "s"},
              {"videos", nlohmann::json::array()}}})}}})}};
  try {
    ntk::parse_config(both);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::config_invalid);
  }

  nlohmann::json scoped = synth_json();
  scoped["train_scope"] = "single-task";
  CHECK_FALSE(ntk::parse_config(scoped).aggregate_tasks);
  scoped["train_scope"] = "sideways";
  try {
    ntk::parse_config(scoped);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::config_invalid);
  }
}

TEST_CASE("config hash tracks content, not formatting") {
  const ntk::ExperimentConfig a = ntk::parse_config(synth_json());
  const ntk::ExperimentConfig b =
      ntk::parse_config(nlohmann::json::parse(synth_json().dump()));
  CHECK(a.config_hash == b.config_hash);
  nlohmann::json changed = synth_json();
  changed["seed"] = 12;
  CHECK(ntk::parse_config(changed).config_hash != a.config_hash);
}

TEST_CASE("preprocess chain removes eog influence and drops the channel") {
  ntk::rng r(31337);
  const Eigen::Index t_len = 400;
  Eigen::MatrixXd m(t_len, 3);
  Eigen::VectorXd artifact(t_len);
  for (Eigen::Index i = 0; i < t_len; ++i) {
    artifact[i] = r.normal();
    m(i, 0) = r.normal() + 1.7 * artifact[i];
    m(i, 1) = r.normal() - 0.8 * artifact[i];
    m(i, 2) = artifact[i];
  }
  ntk::TimeSeriesMatrix ts{std::move(m), 30.0, {"oz", "pz", "veog"}, "v1"};

  ntk::PreprocessParams p;
  p.eog_channels = {"veog"};
  p.average_reference = true;
  const ntk::TimeSeriesMatrix out = ntk::preprocess_chain(ts, p);
  REQUIRE(out.n_channels() == 2);
  CHECK(out.channel_labels == std::vector<std::string>{"oz", "pz"});
  CHECK(std::abs(ntk::pearson(out.samples.col(0), artifact)) < 0.05);
  // average reference: each sample sums to zero across channels
  CHECK(out.samples.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);

  ntk::PreprocessParams missing;
  missing.eog_channels = {"heog"};
  try {
    ntk::preprocess_chain(ts, missing);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::config_invalid);
  }
}

TEST_CASE("event exclusion masks a window around each event") {
  const std::vector<bool> keep = ntk::detail::event_keep_mask({1.0}, 10.0, 30, 0.5);
  REQUIRE(keep.size() == 30);
  for (Eigen::Index i = 0; i < 30; ++i) {
    const bool expected = i < 5 || i > 15;
    CHECK(keep[static_cast<std::size_t>(i)] == expected);
  }
  // exclusion that would wipe everything falls back to keeping all samples
  const std::vector<bool> all = ntk::detail::event_keep_mask({1.0}, 10.0, 30, 10.0);
  for (const bool b : all) CHECK(b);
  // disabled exclusion keeps everything
  const std::vector<bool> off = ntk::detail::event_keep_mask({1.0}, 10.0, 30, 0.0);
  for (const bool b : off) CHECK(b);
}

TEST_CASE("synthetic end-to-end run produces a consistent report") {
  const ntk::ExperimentConfig cfg = ntk::parse_config(synth_json());
  const ntk::RunReport report = ntk::run_experiment(cfg);

  CHECK(report.seed == 11);
  CHECK(report.config_hash == cfg.config_hash);
  CHECK(report.tasks == std::vector<std::string>{"low", "high"});
  CHECK(report.subjects == std::vector<std::string>{"s01", "s02"});
  CHECK(report.videos == std::vector<std::string>{"v01", "v02", "v03"});

  REQUIRE(report.mm.size() == 4);  // 2 tasks x 2 subjects
  for (const ntk::MmEntry& e : report.mm) {
    CHECK(e.n_trials >= 6);
    CHECK(e.accuracy >= 0.0);
    CHECK(e.accuracy <= 1.0);
    CHECK(e.null_n >= 6);  // 8ish circular shifts per fold
    CHECK(std::isfinite(e.bound));
    CHECK(e.bound_lo <= e.bound);
  }
  CHECK(report.mm_pooled_bound.count("low") == 1);
  CHECK(report.mm_pooled_bound.count("high") == 1);

  REQUIRE(report.isc.size() == 2);
  for (const ntk::IscEntry& e : report.isc) {
    CHECK(e.per_fold.size() == 3);
    CHECK(e.per_fold_bound.size() == 3);
    for (const double b : e.per_fold_bound) CHECK(std::isfinite(b));
    CHECK(e.n_surr == 20);
    CHECK(std::isfinite(e.bound));
    CHECK(std::isfinite(e.mean_isc));
  }

  // one leakage audit per subject per fold (aggregate cca) plus one per task
  // per fold (corrca)
  CHECK(report.leakage_folds_checked == 3 * 2 + 3 * 2);
  CHECK(report.leakage_passed);

  REQUIRE(report.comparisons.size() == 2);
  CHECK(report.comparisons[0].metric == "mm_accuracy");
  CHECK(report.comparisons[0].a == "low");
  CHECK(report.comparisons[0].b == "high");
  CHECK(report.comparisons[0].n == 2);
  // Two pairs cannot carry a rank test: either too few nonzero differences
  // (p stays NaN) or every difference is zero (p = 1).
  const double p01 = report.comparisons[0].p;
  CHECK((std::isnan(p01) || p01 == 1.0));
  CHECK(report.comparisons[1].metric == "isc_sum2");
  CHECK(report.comparisons[1].n == 3);

  // trial logs exist for every (task, subject) cell
  REQUIRE(report.trial_logs.size() == 4);
  for (const auto& [key, rows] : report.trial_logs) CHECK(!rows.empty());

  // same config, same bytes
  const ntk::RunReport again = ntk::run_experiment(cfg);
  CHECK(ntk::report_to_json(report).dump() == ntk::report_to_json(again).dump());
}

TEST_CASE("report json round trip preserves values including missing ones") {
  const ntk::ExperimentConfig cfg = ntk::parse_config(synth_json());
  const ntk::RunReport report = ntk::run_experiment(cfg);
  const nlohmann::json j = ntk::report_to_json(report);
  const ntk::RunReport back = ntk::report_from_json(j);
  CHECK(ntk::report_to_json(back).dump() == j.dump());
  CHECK(back.comparisons.size() == report.comparisons.size());
  CHECK(back.leakage_passed == report.leakage_passed);
}

TEST_CASE("manifest staging loads files and runs the same pipeline") {
  const fs::path dir = fs::temp_directory_path() / "ntk_pipeline_test";
  fs::create_directories(dir);

  ntk::SynthCohortConfig scfg;
  scfg.n_subjects = 2;
  scfg.n_videos = 2;
  scfg.video_len_s = 20.0;
  scfg.rate_hz = 30.0;
  scfg.n_channels = 4;
  scfg.seed = 77;
  const ntk::SynthCohort cohort = ntk::gen_cohort(scfg);

  nlohmann::json subjects = nlohmann::json::array();
  for (int s = 0; s < 2; ++s) {
    nlohmann::json videos = nlohmann::json::array();
    for (int v = 0; v < 2; ++v) {
      const std::string eeg_path =
          (dir / ("eeg_s" + std::to_string(s) + "_v" + std::to_string(v))).string();
      ntk::store_timeseries(cohort.eeg[s][v], eeg_path);
      const std::string stim_path = (dir / ("stim_v" + std::to_string(v))).string();
      ntk::store_timeseries(cohort.videos[v].feature, stim_path);
      videos.push_back({{"id", cohort.video_ids[v]},
                        {"eeg", eeg_path},
                        {"stim", stim_path}});
    }
    subjects.push_back({{"id", "subj" + std::to_string(s)}, {"videos", videos}});
  }
  nlohmann::json j{
      {"seed", 3},
      {"segments", {{"win_s", 4.0}, {"mean_interval_s", 2.0}}},
      {"nulls", {{"n_perm", 10}, {"n_surr", 10}}},
      {"manifest", {{"tasks", nlohmann::json::array({{{"name", "watch"},
                                                      {"subjects", subjects}}})}}}};

  const ntk::ExperimentConfig cfg = ntk::parse_config(j);
  REQUIRE_FALSE(cfg.use_synth);
  const ntk::RunReport report = ntk::run_experiment(cfg);
  CHECK(report.tasks == std::vector<std::string>{"watch"});
  CHECK(report.subjects == std::vector<std::string>{"subj0", "subj1"});
  CHECK(report.videos == std::vector<std::string>{"v01", "v02"});
  REQUIRE(report.mm.size() == 2);
  for (const ntk::MmEntry& e : report.mm) CHECK(e.n_trials > 0);
  CHECK(report.isc.size() == 1);
  CHECK(report.leakage_passed);
  // no gaze files: the default mask keeps everything, so trials fill each fold
  CHECK(report.leakage_folds_checked == 2 * 2 + 2 * 1);
}
