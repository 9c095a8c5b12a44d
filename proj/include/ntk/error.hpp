#pragma once

#include <stdexcept>
#include <string>

namespace ntk {

enum class errc {
  dimension_mismatch,
  not_positive_definite,
  k_out_of_range,
  negative_lambda,
  zero_variance,
  length_mismatch,
  empty_input,
  too_few_pairs,
  empty_group,
  cutoff_above_nyquist,
  freq_above_nyquist,
  single_channel,
  degenerate_regressor,
  upsampling_requested,
  irrational_ratio,
  series_too_short,
  shift_out_of_range,
  too_few_segments,
  no_gaze_data,
  no_usable_window,
  no_valid_mismatch,
  empty_trials,
  too_few_videos,
  fewer_than_two_subjects,
  component_out_of_range,
  rank_deficient,
  config_invalid,
  manifest_error,
  format_error,
  io_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::not_positive_definite: return "NotPositiveDefinite";
    case errc::k_out_of_range: return "KOutOfRange";
    case errc::negative_lambda: return "NegativeLambda";
    case errc::zero_variance: return "ZeroVariance";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::empty_input: return "EmptyInput";
    case errc::too_few_pairs: return "TooFewPairs";
    case errc::empty_group: return "EmptyGroup";
    case errc::cutoff_above_nyquist: return "CutoffAboveNyquist";
    case errc::freq_above_nyquist: return "FreqAboveNyquist";
    case errc::single_channel: return "SingleChannel";
    case errc::degenerate_regressor: return "DegenerateRegressor";
    case errc::upsampling_requested: return "UpsamplingRequested";
    case errc::irrational_ratio: return "IrrationalRatio";
    case errc::series_too_short: return "SeriesTooShort";
    case errc::shift_out_of_range: return "ShiftOutOfRange";
    case errc::too_few_segments: return "TooFewSegments";
    case errc::no_gaze_data: return "NoGazeData";
    case errc::no_usable_window: return "NoUsableWindow";
    case errc::no_valid_mismatch: return "NoValidMismatch";
    case errc::empty_trials: return "EmptyTrials";
    case errc::too_few_videos: return "TooFewVideos";
    case errc::fewer_than_two_subjects: return "FewerThanTwoSubjects";
    case errc::component_out_of_range: return "ComponentOutOfRange";
    case errc::rank_deficient: return "RankDeficient";
    case errc::config_invalid: return "ConfigInvalid";
    case errc::manifest_error: return "ManifestError";
    case errc::format_error: return "FormatError";
    case errc::io_error: return "IoError";
  }
  return "UnknownError";
}

/// Library-wide exception carrying a machine-readable error kind.
class error : public std::runtime_error {
 public:
  error(errc kind, const std::string& msg)
      : std::runtime_error(std::string(errc_name(kind)) + ": " + msg), kind_(kind) {}

  errc kind() const { return kind_; }

 private:
  errc kind_;
};

[[noreturn]] inline void fail(errc kind, const std::string& msg) { throw error(kind, msg); }

inline void require(bool cond, errc kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace ntk
