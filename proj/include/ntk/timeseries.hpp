#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "ntk/error.hpp"

namespace ntk {

/// T x D multichannel signal with sampling rate and per-video provenance.
/// Rows are samples, columns are channels.
struct TimeSeriesMatrix {
  Eigen::MatrixXd samples;
  double rate_hz = 0.0;
  std::vector<std::string> channel_labels;
  std::string video_id;

  TimeSeriesMatrix() = default;
  TimeSeriesMatrix(Eigen::MatrixXd s, double rate, std::vector<std::string> labels = {},
                   std::string video = {})
      : samples(std::move(s)),
        rate_hz(rate),
        channel_labels(std::move(labels)),
        video_id(std::move(video)) {}

  Eigen::Index n_samples() const { return samples.rows(); }
  Eigen::Index n_channels() const { return samples.cols(); }

  void validate() const {
    require(samples.rows() >= 1 && samples.cols() >= 1, errc::dimension_mismatch,
            "time series must be at least 1x1");
    require(rate_hz > 0.0, errc::config_invalid, "rate_hz must be positive");
    require(samples.allFinite(), errc::format_error, "time series contains non-finite samples");
    if (!channel_labels.empty()) {
      require(static_cast<Eigen::Index>(channel_labels.size()) == samples.cols(),
              errc::dimension_mismatch, "channel label count does not match columns");
    }
  }

  /// Same metadata, new payload.
  TimeSeriesMatrix with_samples(Eigen::MatrixXd s) const {
    TimeSeriesMatrix out = *this;
    out.samples = std::move(s);
    return out;
  }
};

inline std::vector<std::string> default_labels(Eigen::Index d, const std::string& prefix = "ch") {
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) labels.push_back(prefix + std::to_string(i));
  return labels;
}

}  // namespace ntk
