#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ntk/cca.hpp"
#include "ntk/gazefix.hpp"
#include "ntk/rng.hpp"
#include "ntk/timeseries.hpp"

namespace ntk {

struct SegmentSpec {
  std::string video_id;
  Eigen::Index start = 0;
  Eigen::Index length = 0;
};

struct MmTrial {
  SegmentSpec eeg_segment;
  SegmentSpec match;
  SegmentSpec mismatch;
  bool match_first = false;  // presentation order of the two candidates
};

struct FoldPlan {
  struct Fold {
    std::vector<std::string> train;
    std::string test;
  };
  std::vector<Fold> folds;
};

/// Leave-one-video-out folds, one per video, in input order.
inline FoldPlan plan_folds(const std::vector<std::string>& video_ids) {
  require(video_ids.size() >= 2, errc::too_few_videos,
          "leave-one-video-out needs at least two videos");
  for (std::size_t i = 0; i < video_ids.size(); ++i)
    for (std::size_t j = i + 1; j < video_ids.size(); ++j)
      require(video_ids[i] != video_ids[j], errc::config_invalid, "duplicate video id");
  FoldPlan plan;
  for (std::size_t i = 0; i < video_ids.size(); ++i) {
    FoldPlan::Fold fold;
    fold.test = video_ids[i];
    for (std::size_t j = 0; j < video_ids.size(); ++j)
      if (j != i) fold.train.push_back(video_ids[j]);
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

/// Window starts on a jittered grid: start_k = k * interval + U(-interval/2,
/// +interval/2), quantized to samples. Windows touching any unusable mask
/// bin are discarded. One jitter is drawn per grid point regardless of
/// acceptance, so the draw stream is replayable.
inline std::vector<SegmentSpec> sample_segments(const FixationMask& usable, double win_s,
                                                double mean_interval_s, std::uint64_t seed) {
  require(win_s > 0.0 && mean_interval_s > 0.0, errc::config_invalid,
          "window and interval must be positive");
  const auto win_len = static_cast<Eigen::Index>(std::llround(win_s * usable.rate_hz));
  require(win_len >= 1, errc::config_invalid, "window shorter than one sample");
  require(usable.n() >= win_len, errc::no_usable_window, "window longer than the recording");

  const Eigen::Index max_start = usable.n() - win_len;
  const double max_start_s = static_cast<double>(max_start) / usable.rate_hz;
  const auto n_grid =
      static_cast<Eigen::Index>(std::floor(max_start_s / mean_interval_s + 0.5)) + 1;

  rng r(seed);
  std::vector<SegmentSpec> segments;
  for (Eigen::Index k = 0; k < n_grid; ++k) {
    const double jitter = (r.uniform() - 0.5) * mean_interval_s;
    const double start_s = static_cast<double>(k) * mean_interval_s + jitter;
    const auto start = static_cast<Eigen::Index>(std::llround(start_s * usable.rate_hz));
    if (start < 0 || start > max_start) continue;
    if (!segments.empty() && segments.back().start == start) continue;
    bool ok = true;
    for (Eigen::Index t = start; t < start + win_len; ++t)
      if (!usable.flags[static_cast<std::size_t>(t)]) {
        ok = false;
        break;
      }
    if (ok) segments.push_back({usable.video_id, start, win_len});
  }
  require(!segments.empty(), errc::no_usable_window, "mask leaves no usable window");
  return segments;
}

/// Builds one trial: the match is the time-aligned stimulus segment; the
/// mismatch is drawn uniformly from candidates at least one window length
/// away. Presentation order is a coin flip (rebalance a whole trial list
/// with assign_balanced_order).
inline MmTrial make_trial(const SegmentSpec& segment, const std::vector<SegmentSpec>& candidates,
                          rng& r) {
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const SegmentSpec& c = candidates[i];
    if (c.video_id != segment.video_id || c.length != segment.length) continue;
    const Eigen::Index gap = c.start >= segment.start ? c.start - segment.start
                                                      : segment.start - c.start;
    if (gap < segment.length) continue;
    valid.push_back(i);
  }
  require(!valid.empty(), errc::no_valid_mismatch,
          "no candidate lies a full window away from the match");
  MmTrial trial;
  trial.eeg_segment = segment;
  trial.match = segment;
  trial.mismatch = candidates[valid[r.uniform_index(valid.size())]];
  trial.match_first = r.coin();
  return trial;
}

/// Rewrites presentation order so exactly half the trials (rounding down)
/// lead with the match, in a shuffled arrangement.
inline void assign_balanced_order(std::vector<MmTrial>& trials, rng& r) {
  std::vector<std::size_t> order(trials.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  r.shuffle(order);
  for (std::size_t i = 0; i < order.size(); ++i)
    trials[order[i]].match_first = i < order.size() / 2;
}

struct TrialResult {
  MmTrial trial;
  double score_match = 0.0;
  double score_mismatch = 0.0;
  bool picked_match = false;
};

/// Scores both candidates as the sum of the first two canonical
/// correlations and picks the larger; exact ties go to the mismatch.
inline TrialResult decode_trial(const CcaModel& model, const TimeSeriesMatrix& eeg_emb,
                                const TimeSeriesMatrix& stim_match_emb,
                                const TimeSeriesMatrix& stim_mismatch_emb) {
  const int n_comp = std::min(2, model.k());
  const std::vector<double> rho_m = canonical_correlations(model, eeg_emb, stim_match_emb);
  const std::vector<double> rho_mm = canonical_correlations(model, eeg_emb, stim_mismatch_emb);
  TrialResult res;
  for (int j = 0; j < n_comp; ++j) {
    res.score_match += rho_m[static_cast<std::size_t>(j)];
    res.score_mismatch += rho_mm[static_cast<std::size_t>(j)];
  }
  res.picked_match = res.score_match > res.score_mismatch;
  return res;
}

/// Fraction of trials whose picked candidate was the true match.
inline double mm_accuracy(const std::vector<TrialResult>& trials) {
  require(!trials.empty(), errc::empty_trials, "no decoded trials");
  std::size_t correct = 0;
  for (const TrialResult& t : trials) correct += t.picked_match ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(trials.size());
}

}  // namespace ntk
