#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ntk/ntk.hpp"

using Catch::Approx;
using ntk::SynthCohort;
using ntk::SynthCohortConfig;

namespace {

SynthCohortConfig small_cfg() {
  SynthCohortConfig cfg;
  cfg.n_subjects = 2;
  cfg.n_videos = 2;
  cfg.video_len_s = 20.0;
  cfg.rate_hz = 30.0;
  cfg.n_channels = 4;
  cfg.seed = 321;
  return cfg;
}

double colcorr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return ntk::pearson(a, b);
}

}  // namespace

TEST_CASE("stimulus feature is unit-variance, mean-centered, and seeded") {
  const ntk::TimeSeriesMatrix f = ntk::gen_feature(20.0, 30.0, 77);
  REQUIRE(f.samples.rows() == 600);
  REQUIRE(f.samples.cols() == 1);
  CHECK(f.rate_hz == 30.0);
  CHECK(f.channel_labels == std::vector<std::string>{"flow"});
  CHECK(std::abs(f.samples.col(0).mean()) < 1e-12);
  CHECK(f.samples.col(0).squaredNorm() / 600.0 == Approx(1.0).epsilon(1e-9));

  const ntk::TimeSeriesMatrix same = ntk::gen_feature(20.0, 30.0, 77);
  CHECK((f.samples - same.samples).cwiseAbs().maxCoeff() == 0.0);
  const ntk::TimeSeriesMatrix other = ntk::gen_feature(20.0, 30.0, 78);
  CHECK((f.samples - other.samples).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("default response kernel has unit energy and spans under half a second") {
  for (const double rate : {30.0, 64.0, 100.0}) {
    const std::vector<double> k = ntk::default_kernel(rate);
    CHECK(static_cast<double>(k.size()) <= 0.5 * rate);
    double energy = 0.0;
    for (const double v : k) energy += v * v;
    CHECK(energy == Approx(1.0).epsilon(1e-12));
    // biphasic: both polarities present
    CHECK(*std::max_element(k.begin(), k.end()) > 0.0);
    CHECK(*std::min_element(k.begin(), k.end()) < 0.0);
  }
}

TEST_CASE("cohort generation is reproducible and seed-sensitive") {
  const SynthCohortConfig cfg = small_cfg();
  const SynthCohort a = ntk::gen_cohort(cfg);
  const SynthCohort b = ntk::gen_cohort(cfg);
  REQUIRE(a.eeg.size() == 2);
  REQUIRE(a.eeg[0].size() == 2);
  CHECK(a.video_ids == std::vector<std::string>{"v01", "v02"});
  for (int s = 0; s < 2; ++s)
    for (int v = 0; v < 2; ++v) {
      CHECK((a.eeg[s][v].samples - b.eeg[s][v].samples).cwiseAbs().maxCoeff() == 0.0);
      CHECK(a.eeg[s][v].video_id == a.video_ids[static_cast<std::size_t>(v)]);
      CHECK(a.eeg[s][v].samples.rows() == 600);
      CHECK(a.eeg[s][v].samples.cols() == 4);
    }

  SynthCohortConfig reseeded = cfg;
  reseeded.seed = 322;
  const SynthCohort c = ntk::gen_cohort(reseeded);
  CHECK((a.eeg[0][0].samples - c.eeg[0][0].samples).cwiseAbs().maxCoeff() > 1e-3);
  CHECK((a.videos[0].feature.samples - c.videos[0].feature.samples).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("task label changes noise but keeps videos and head geometry") {
  SynthCohortConfig t1 = small_cfg();
  t1.task_label = "one";
  t1.noise_sigma = 1e-9;
  SynthCohortConfig t2 = t1;
  t2.task_label = "two";
  const SynthCohort a = ntk::gen_cohort(t1);
  const SynthCohort b = ntk::gen_cohort(t2);

  // same stimulus features regardless of task
  CHECK((a.videos[0].feature.samples - b.videos[0].feature.samples).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.videos[1].feature.samples - b.videos[1].feature.samples).cwiseAbs().maxCoeff() == 0.0);
  // with noise suppressed, EEG is the deterministic driven part: identical
  // across tasks means mixings and gains are task-independent too
  for (int s = 0; s < 2; ++s)
    CHECK((a.eeg[s][0].samples - b.eeg[s][0].samples).cwiseAbs().maxCoeff() < 1e-6);

  // at real noise levels the tasks differ
  SynthCohortConfig n1 = small_cfg();
  n1.task_label = "one";
  SynthCohortConfig n2 = small_cfg();
  n2.task_label = "two";
  const SynthCohort c = ntk::gen_cohort(n1);
  const SynthCohort d = ntk::gen_cohort(n2);
  CHECK((c.eeg[0][0].samples - d.eeg[0][0].samples).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("noiseless channels are the convolved feature times a fixed mixing") {
  SynthCohortConfig cfg = small_cfg();
  cfg.noise_sigma = 1e-12;
  cfg.attention_gain = 2.0;
  const SynthCohort cohort = ntk::gen_cohort(cfg);

  // reconstruct the driven signal from the exposed pieces
  Eigen::VectorXd conv = Eigen::VectorXd::Zero(600);
  const Eigen::VectorXd feat = cohort.videos[0].feature.samples.col(0);
  for (Eigen::Index t = 0; t < 600; ++t)
    for (std::size_t j = 0; j < cohort.kernel.size() && static_cast<Eigen::Index>(j) <= t; ++j)
      conv[t] += cohort.kernel[j] * feat[t - static_cast<Eigen::Index>(j)];
  const Eigen::VectorXd driven = cohort.gains[0].cwiseProduct(conv);

  double mix_norm_sq = 0.0;
  for (int c = 0; c < 4; ++c) {
    const Eigen::VectorXd ch = cohort.eeg[0][0].samples.col(c);
    CHECK(std::abs(colcorr(ch, driven)) > 1.0 - 1e-9);
    // per-channel scale recovers the mixing weight
    const double w = ch.dot(driven) / driven.squaredNorm();
    mix_norm_sq += w * w;
    CHECK((ch - w * driven).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK(mix_norm_sq == Approx(1.0).epsilon(1e-9));  // mixing vectors are unit length

  // the planted gain profile is exposed directly
  CHECK(cohort.gains[0].minCoeff() == 2.0);
  CHECK(cohort.gains[0].maxCoeff() == 2.0);
}

TEST_CASE("an impulse kernel passes the feature through unchanged") {
  SynthCohortConfig cfg = small_cfg();
  cfg.kernel = {1.0};
  cfg.noise_sigma = 1e-12;
  cfg.n_channels = 1;
  cfg.mixing_jitter = 0.0;  // mixing is exactly the unit vector
  const SynthCohort cohort = ntk::gen_cohort(cfg);
  const Eigen::VectorXd ch = cohort.eeg[0][0].samples.col(0);
  const Eigen::VectorXd feat = cohort.videos[0].feature.samples.col(0);
  CHECK((ch - feat).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("eccentricity ramp scales the gain from full to the attenuation floor") {
  SynthCohortConfig cfg = small_cfg();
  cfg.eccentricity_profile = ntk::EccProfile::linear_ramp;
  cfg.ecc_attenuation = 0.25;
  cfg.attention_gain = 2.0;
  const SynthCohort cohort = ntk::gen_cohort(cfg);
  for (const Eigen::VectorXd& g : cohort.gains) {
    CHECK(g[0] == Approx(2.0));
    CHECK(g[g.size() - 1] == Approx(0.5));
    for (Eigen::Index t = 1; t < g.size(); ++t) CHECK(g[t] <= g[t - 1] + 1e-12);
  }
}

TEST_CASE("event times are seeded per video, sorted, and away from the edges") {
  SynthCohortConfig cfg = small_cfg();
  cfg.video_len_s = 60.0;
  cfg.event_rate_per_min = 10.0;
  const SynthCohort cohort = ntk::gen_cohort(cfg);
  for (const ntk::SynthVideo& v : cohort.videos) {
    REQUIRE(v.event_times_s.size() == 10);
    CHECK(std::is_sorted(v.event_times_s.begin(), v.event_times_s.end()));
    for (const double t : v.event_times_s) {
      CHECK(t >= 1.0);
      CHECK(t <= 59.0);
    }
  }
  CHECK(cohort.videos[0].event_times_s != cohort.videos[1].event_times_s);
}

TEST_CASE("shared component is common across subjects when attention is off") {
  SynthCohortConfig cfg = small_cfg();
  cfg.attention_gain = 0.0;
  cfg.shared_fraction = 1.0;
  cfg.noise_sigma = 1e-9;
  const SynthCohort cohort = ntk::gen_cohort(cfg);
  const Eigen::VectorXd a = cohort.eeg[0][0].samples.col(0);
  const Eigen::VectorXd b = cohort.eeg[1][0].samples.col(2);
  REQUIRE(a.squaredNorm() > 1.0);  // the shared part is actually present
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);  // same signal in every channel and subject
}

TEST_CASE("synthetic gaze plants excursions, blinks, and onset annotations") {
  const ntk::SynthGaze gaze = ntk::gen_gaze(60.0, 60.0, 12.0, 6.0, 2025);
  REQUIRE(gaze.samples.size() == 3600);
  REQUIRE(gaze.truth.size() == 3600);

  std::size_t n_blink = 0, n_shift = 0, n_onsets = 0;
  for (std::size_t i = 0; i < gaze.samples.size(); ++i) {
    const ntk::GazeSample& g = gaze.samples[i];
    CHECK(g.t == Approx(static_cast<double>(i) / 60.0));
    switch (gaze.truth[i]) {
      case ntk::GazeLabel::blink:
        ++n_blink;
        CHECK(g.x == -9999.0);
        CHECK(g.y == -9999.0);
        CHECK(g.annotation == ntk::GazeAnnotation::blink);
        break;
      case ntk::GazeLabel::fixation: {
        const double dist = std::hypot(g.x - 960.0, g.y - 540.0);
        CHECK(dist <= 12.0 + 1e-9);
        CHECK(g.annotation == ntk::GazeAnnotation::none);
        break;
      }
      case ntk::GazeLabel::non_fixation: {
        const double dist = std::hypot(g.x - 960.0, g.y - 540.0);
        CHECK(dist >= 250.0 - 12.0 - 1e-9);  // target is at least 250 px out
        ++n_shift;
        const bool fresh = i == 0 || gaze.truth[i - 1] != ntk::GazeLabel::non_fixation;
        if (g.annotation == ntk::GazeAnnotation::saccade) ++n_onsets;
        if (fresh) CHECK(g.annotation == ntk::GazeAnnotation::saccade);
        break;
      }
    }
  }
  CHECK(n_blink > 0);
  CHECK(n_shift > 0);
  // 12 planted shifts minus any overlap-skips, one onset each
  CHECK(n_onsets >= 8);
  CHECK(n_onsets <= 12);
  const double shift_frac = static_cast<double>(n_shift) / 3600.0;
  CHECK(shift_frac > 0.02);
  CHECK(shift_frac < 0.12);

  // saccade annotations only appear on non-fixation samples
  for (std::size_t i = 0; i < gaze.samples.size(); ++i)
    if (gaze.samples[i].annotation == ntk::GazeAnnotation::saccade)
      CHECK(gaze.truth[i] == ntk::GazeLabel::non_fixation);
}

TEST_CASE("cohort gaze streams are per subject and video") {
  SynthCohortConfig cfg = small_cfg();
  cfg.gaze_rate_hz = 30.0;
  cfg.gaze_shift_rate_per_min = 12.0;
  cfg.gaze_blink_rate_per_min = 6.0;
  const SynthCohort cohort = ntk::gen_cohort(cfg);
  REQUIRE(cohort.gaze.size() == 2);
  REQUIRE(cohort.gaze[0].size() == 2);
  CHECK(cohort.gaze[0][0].samples.size() == 600);
  // different subjects get different gaze realizations
  bool differs = false;
  for (std::size_t i = 0; i < 600 && !differs; ++i)
    differs = cohort.gaze[0][0].samples[i].x != cohort.gaze[1][0].samples[i].x;
  CHECK(differs);

  const SynthCohort plain = ntk::gen_cohort(small_cfg());
  CHECK(plain.gaze[0].empty());  // disabled by default
}

TEST_CASE("cohort configuration is validated") {
  auto expect_invalid = [](SynthCohortConfig cfg) {
    try {
      ntk::gen_cohort(cfg);
      FAIL();
    } catch (const ntk::error& e) {
      CHECK(e.kind() == ntk::errc::config_invalid);
    }
  };
  SynthCohortConfig cfg = small_cfg();
  cfg.n_videos = 1;
  expect_invalid(cfg);
  cfg = small_cfg();
  cfg.noise_sigma = 0.0;
  expect_invalid(cfg);
  cfg = small_cfg();
  cfg.ecc_attenuation = 1.5;
  expect_invalid(cfg);
  cfg = small_cfg();
  cfg.attention_gain = -0.1;
  expect_invalid(cfg);
  cfg = small_cfg();
  cfg.mixing_jitter = -1.0;
  expect_invalid(cfg);
  cfg = small_cfg();
  cfg.shared_fraction = 1.1;
  expect_invalid(cfg);
  cfg = small_cfg();
  cfg.kernel.assign(16, 0.1);  // 16 taps at 30 Hz exceeds the 0.5 s limit
  expect_invalid(cfg);
}
