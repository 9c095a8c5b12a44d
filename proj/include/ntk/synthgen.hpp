#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "ntk/gazefix.hpp"
#include "ntk/rng.hpp"
#include "ntk/timeseries.hpp"

namespace ntk {

enum class EccProfile { constant, linear_ramp };

/// Cohort generator settings. Stimulus features are keyed by video and
/// channel mixings by subject (both independent of task_label), so
/// cohorts generated for several task conditions from one seed share
/// their videos and head geometry while noise stays task-specific.
struct SynthCohortConfig {
  int n_subjects = 1;
  int n_videos = 2;
  double video_len_s = 60.0;
  double rate_hz = 30.0;
  int n_channels = 8;
  std::vector<double> kernel;  // empty -> built-in default
  double attention_gain = 1.0;
  EccProfile eccentricity_profile = EccProfile::constant;
  double ecc_attenuation = 1.0;  // response gain multiplier at maximum eccentricity
  double noise_sigma = 1.0;
  double shared_fraction = 0.0;
  double mixing_jitter = 0.3;
  double event_rate_per_min = 0.0;
  double gaze_rate_hz = 0.0;  // 0 disables gaze generation
  double gaze_shift_rate_per_min = 0.0;
  double gaze_blink_rate_per_min = 0.0;
  std::string task_label = "task";
  std::uint64_t seed = 0;

  void validate() const {
    require(n_subjects >= 1, errc::config_invalid, "n_subjects must be at least 1");
    require(n_videos >= 2, errc::config_invalid, "n_videos must be at least 2");
    require(video_len_s > 0.0 && rate_hz > 0.0, errc::config_invalid,
            "video length and rate must be positive");
    require(n_channels >= 1, errc::config_invalid, "n_channels must be at least 1");
    require(attention_gain >= 0.0, errc::config_invalid, "attention_gain must be nonnegative");
    require(ecc_attenuation >= 0.0 && ecc_attenuation <= 1.0, errc::config_invalid,
            "ecc_attenuation must lie in [0, 1]");
    require(noise_sigma > 0.0, errc::config_invalid, "noise_sigma must be positive");
    require(shared_fraction >= 0.0 && shared_fraction <= 1.0, errc::config_invalid,
            "shared_fraction must lie in [0, 1]");
    require(mixing_jitter >= 0.0, errc::config_invalid, "mixing_jitter must be nonnegative");
    require(event_rate_per_min >= 0.0 && gaze_rate_hz >= 0.0 &&
                gaze_shift_rate_per_min >= 0.0 && gaze_blink_rate_per_min >= 0.0,
            errc::config_invalid, "rates must be nonnegative");
    if (!kernel.empty())
      require(static_cast<long long>(kernel.size()) <= std::llround(0.5 * rate_hz),
              errc::config_invalid, "kernel must span at most 0.5 s");
  }
};

namespace detail {

inline std::vector<double> smoothed_noise(Eigen::Index t_len, rng& r, bool rectify) {
  std::vector<double> x(static_cast<std::size_t>(t_len));
  double state = 0.0;
  for (auto& v : x) {
    double draw = r.normal();
    if (rectify) draw = std::abs(draw);
    state = 0.9 * state + 0.1 * draw;
    v = state;
  }
  double mean = 0.0;
  for (const double v : x) mean += v;
  mean /= static_cast<double>(t_len);
  double var = 0.0;
  for (double& v : x) {
    v -= mean;
    var += v * v;
  }
  var /= static_cast<double>(t_len);
  if (var > 0.0)
    for (double& v : x) v /= std::sqrt(var);
  return x;
}

inline Eigen::VectorXd causal_convolve(const Eigen::VectorXd& x, const std::vector<double>& k) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    const Eigen::Index kmax = std::min<Eigen::Index>(static_cast<Eigen::Index>(k.size()), t + 1);
    for (Eigen::Index j = 0; j < kmax; ++j) acc += k[static_cast<std::size_t>(j)] * x[t - j];
    y[t] = acc;
  }
  return y;
}

}  // namespace detail

/// Evoked-response-like default kernel: difference of two gamma bumps
/// spanning 0.4 s, normalized to unit energy.
inline std::vector<double> default_kernel(double rate_hz) {
  const auto n = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::llround(0.4 * rate_hz)));
  auto bump = [](double t, double peak_s, double shape) {
    if (t <= 0.0) return 0.0;
    return std::pow(t / peak_s, shape) * std::exp(shape * (1.0 - t / peak_s));
  };
  std::vector<double> k(static_cast<std::size_t>(n));
  double energy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    k[static_cast<std::size_t>(i)] = bump(t, 0.10, 2.0) - 0.7 * bump(t, 0.22, 3.0);
    energy += k[static_cast<std::size_t>(i)] * k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= std::sqrt(energy);
  return k;
}

/// Optical-flow-like 1-D stimulus feature: low-pass filtered rectified
/// noise, mean-centered and scaled to unit variance.
inline TimeSeriesMatrix gen_feature(double len_s, double rate_hz, std::uint64_t seed) {
  const auto t_len = static_cast<Eigen::Index>(std::llround(len_s * rate_hz));
  require(t_len >= 2, errc::config_invalid, "feature needs at least two samples");
  rng r(seed);
  const std::vector<double> x = detail::smoothed_noise(t_len, r, true);
  TimeSeriesMatrix ts;
  ts.samples = Eigen::Map<const Eigen::VectorXd>(x.data(), t_len);
  ts.rate_hz = rate_hz;
  ts.channel_labels = {"flow"};
  return ts;
}

struct SynthGaze {
  std::vector<GazeSample> samples;
  std::vector<GazeLabel> truth;  // planted ground-truth label per sample
};

/// Synthetic gaze: jitter around a fixed screen point, with planted
/// excursions (saccade-annotated at onset) and blink gaps at the given
/// rates. Sentinel coordinates mark blink samples.
inline SynthGaze gen_gaze(double len_s, double rate_hz, double shift_rate_per_min,
                          double blink_rate_per_min, std::uint64_t seed) {
  require(len_s > 0.0 && rate_hz > 0.0, errc::config_invalid,
          "gaze length and rate must be positive");
  require(shift_rate_per_min >= 0.0 && blink_rate_per_min >= 0.0, errc::config_invalid,
          "event rates must be nonnegative");
  const auto n = static_cast<Eigen::Index>(std::llround(len_s * rate_hz));
  const double cx = 960.0, cy = 540.0, jitter_px = 12.0;

  rng r(seed);
  struct Interval {
    double start, end;
    bool blink;
    double tx, ty;
  };
  std::vector<Interval> events;
  auto overlaps = [&events](double s, double e) {
    for (const Interval& iv : events)
      if (s < iv.end && iv.start < e) return true;
    return false;
  };

  const auto n_shifts = static_cast<int>(std::llround(shift_rate_per_min * len_s / 60.0));
  for (int i = 0; i < n_shifts; ++i) {
    const double dur = r.uniform(0.2, 0.5);
    const double start = r.uniform(0.0, std::max(0.0, len_s - dur));
    const double ang = r.uniform(0.0, 2.0 * std::numbers::pi);
    const double dist = r.uniform(250.0, 500.0);
    if (overlaps(start, start + dur)) continue;  // keep events disjoint
    events.push_back({start, start + dur, false, cx + dist * std::cos(ang),
                      cy + dist * std::sin(ang)});
  }
  const auto n_blinks = static_cast<int>(std::llround(blink_rate_per_min * len_s / 60.0));
  for (int i = 0; i < n_blinks; ++i) {
    const double dur = r.uniform(0.1, 0.3);
    const double start = r.uniform(0.0, std::max(0.0, len_s - dur));
    if (overlaps(start, start + dur)) continue;
    events.push_back({start, start + dur, true, 0.0, 0.0});
  }

  SynthGaze out;
  out.samples.resize(static_cast<std::size_t>(n));
  out.truth.resize(static_cast<std::size_t>(n));
  const Interval* prev_event = nullptr;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    GazeSample& g = out.samples[static_cast<std::size_t>(i)];
    g.t = t;

    const Interval* hit = nullptr;
    for (const Interval& iv : events)
      if (t >= iv.start && t < iv.end) {
        hit = &iv;
        break;
      }
    if (hit != nullptr && hit->blink) {
      g.x = -9999.0;
      g.y = -9999.0;
      g.annotation = GazeAnnotation::blink;
      out.truth[static_cast<std::size_t>(i)] = GazeLabel::blink;
    } else {
      const double rad = jitter_px * std::sqrt(r.uniform());
      const double ang = r.uniform(0.0, 2.0 * std::numbers::pi);
      const double bx = hit != nullptr ? hit->tx : cx;
      const double by = hit != nullptr ? hit->ty : cy;
      g.x = bx + rad * std::cos(ang);
      g.y = by + rad * std::sin(ang);
      g.annotation = (hit != nullptr && hit != prev_event) ? GazeAnnotation::saccade
                                                           : GazeAnnotation::none;
      out.truth[static_cast<std::size_t>(i)] =
          hit != nullptr ? GazeLabel::non_fixation : GazeLabel::fixation;
    }
    prev_event = hit;
  }
  return out;
}

struct SynthVideo {
  TimeSeriesMatrix feature;
  std::vector<double> event_times_s;
};

struct SynthCohort {
  std::vector<std::string> video_ids;
  std::vector<SynthVideo> videos;
  std::vector<std::vector<TimeSeriesMatrix>> eeg;   // [subject][video]
  std::vector<std::vector<SynthGaze>> gaze;         // [subject][video], empty if disabled
  std::vector<Eigen::VectorXd> gains;               // ground-truth g(t) per video
  std::vector<double> kernel;
};

/// EEG(t) = mixing * (g(t) * (kernel (*) feature)(t)) + shared component
/// + noise, per subject and video.
inline SynthCohort gen_cohort(const SynthCohortConfig& cfg) {
  cfg.validate();
  const auto t_len = static_cast<Eigen::Index>(std::llround(cfg.video_len_s * cfg.rate_hz));
  require(t_len >= 2, errc::config_invalid, "videos need at least two samples");

  SynthCohort cohort;
  cohort.kernel = cfg.kernel.empty() ? default_kernel(cfg.rate_hz) : cfg.kernel;

  const int d = cfg.n_channels;
  const Eigen::VectorXd base_mix = Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(double(d)));
  std::vector<Eigen::VectorXd> mixings;
  for (int s = 0; s < cfg.n_subjects; ++s) {
    rng r(derive_seed(cfg.seed, "mixing", static_cast<std::uint64_t>(s)));
    Eigen::VectorXd m = base_mix;
    for (int c = 0; c < d; ++c) m[c] += cfg.mixing_jitter * r.normal();
    mixings.push_back(m.normalized());
  }

  std::vector<Eigen::VectorXd> shared;
  for (int v = 0; v < cfg.n_videos; ++v) {
    char name[16];
    std::snprintf(name, sizeof(name), "v%02d", v + 1);
    cohort.video_ids.emplace_back(name);

    SynthVideo video;
    video.feature = gen_feature(cfg.video_len_s, cfg.rate_hz,
                                derive_seed(cfg.seed, "feature", static_cast<std::uint64_t>(v)));
    video.feature.video_id = name;

    const auto n_events =
        static_cast<int>(std::llround(cfg.event_rate_per_min * cfg.video_len_s / 60.0));
    rng ev(derive_seed(cfg.seed, "events", static_cast<std::uint64_t>(v)));
    for (int e = 0; e < n_events; ++e)
      video.event_times_s.push_back(ev.uniform(1.0, std::max(1.0, cfg.video_len_s - 1.0)));
    std::sort(video.event_times_s.begin(), video.event_times_s.end());
    cohort.videos.push_back(std::move(video));

    Eigen::VectorXd g(t_len);
    for (Eigen::Index t = 0; t < t_len; ++t) {
      double ecc = 1.0;
      if (cfg.eccentricity_profile == EccProfile::linear_ramp)
        ecc = 1.0 + (cfg.ecc_attenuation - 1.0) * static_cast<double>(t) /
                        static_cast<double>(t_len - 1);
      g[t] = cfg.attention_gain * ecc;
    }
    cohort.gains.push_back(std::move(g));

    rng sh(derive_seed(cfg.seed, "shared", hash_str(cfg.task_label),
                       static_cast<std::uint64_t>(v)));
    const std::vector<double> c = detail::smoothed_noise(t_len, sh, false);
    shared.push_back(Eigen::Map<const Eigen::VectorXd>(c.data(), t_len));
  }

  cohort.eeg.resize(static_cast<std::size_t>(cfg.n_subjects));
  cohort.gaze.resize(static_cast<std::size_t>(cfg.n_subjects));
  for (int s = 0; s < cfg.n_subjects; ++s) {
    for (int v = 0; v < cfg.n_videos; ++v) {
      const Eigen::VectorXd response =
          detail::causal_convolve(cohort.videos[static_cast<std::size_t>(v)].feature.samples.col(0),
                                  cohort.kernel);
      const Eigen::VectorXd driven =
          cohort.gains[static_cast<std::size_t>(v)].cwiseProduct(response);

      rng nz(derive_seed(cfg.seed, "noise", hash_str(cfg.task_label),
                         static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(v)));
      Eigen::MatrixXd e(t_len, d);
      for (Eigen::Index t = 0; t < t_len; ++t)
        for (int c = 0; c < d; ++c) e(t, c) = nz.normal();

      TimeSeriesMatrix ts;
      ts.samples = driven * mixings[static_cast<std::size_t>(s)].transpose() +
                   cfg.shared_fraction * shared[static_cast<std::size_t>(v)] *
                       base_mix.transpose() +
                   cfg.noise_sigma * e;
      ts.rate_hz = cfg.rate_hz;
      ts.video_id = cohort.video_ids[static_cast<std::size_t>(v)];
      ts.channel_labels = default_labels(d);
      cohort.eeg[static_cast<std::size_t>(s)].push_back(std::move(ts));

      if (cfg.gaze_rate_hz > 0.0)
        cohort.gaze[static_cast<std::size_t>(s)].push_back(
            gen_gaze(cfg.video_len_s, cfg.gaze_rate_hz, cfg.gaze_shift_rate_per_min,
                     cfg.gaze_blink_rate_per_min,
                     derive_seed(cfg.seed, "gaze", hash_str(cfg.task_label),
                                 static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(v))));
    }
  }
  return cohort;
}

}  // namespace ntk
