#pragma once

#include <cstdlib>
#include <string>

#include "ntk/timeseries.hpp"

namespace ntk {

/// Lag/offset expansion parameters: L time-lagged copies shifted by a common
/// integer offset (positive offset looks ahead).
struct LagSpec {
  int num_lags = 1;
  int offset = 0;

  void validate() const {
    require(num_lags >= 1, errc::config_invalid, "num_lags must be >= 1");
  }
};

/// Expands a T x D series into T x (D*L): the column block for channel c holds
/// x_c(t - l + offset) for l = 0..L-1, channel-major then lag. Out-of-range
/// time indices are zero-filled (signals are centered per video, so zeros are
/// neutral).
inline TimeSeriesMatrix lag_embed(const TimeSeriesMatrix& ts, const LagSpec& spec) {
  spec.validate();
  const Eigen::Index t_len = ts.n_samples();
  const Eigen::Index d = ts.n_channels();
  const int l = spec.num_lags;
  require(t_len > static_cast<Eigen::Index>(l) + std::abs(spec.offset), errc::series_too_short,
          "series too short for lag embedding");

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t_len, d * l);
  for (Eigen::Index c = 0; c < d; ++c) {
    for (int lag = 0; lag < l; ++lag) {
      const Eigen::Index col = c * l + lag;
      const Eigen::Index shift = static_cast<Eigen::Index>(lag) - spec.offset;  // src = t - shift
      const Eigen::Index t_begin = std::max<Eigen::Index>(0, shift);
      const Eigen::Index t_end = std::min(t_len, t_len + shift);
      if (t_begin < t_end) {
        out.col(col).segment(t_begin, t_end - t_begin) =
            ts.samples.col(c).segment(t_begin - shift, t_end - t_begin);
      }
    }
  }

  TimeSeriesMatrix res(std::move(out), ts.rate_hz, {}, ts.video_id);
  res.channel_labels.reserve(static_cast<std::size_t>(d * l));
  for (Eigen::Index c = 0; c < d; ++c) {
    const std::string base =
        ts.channel_labels.empty() ? "ch" + std::to_string(c) : ts.channel_labels[static_cast<std::size_t>(c)];
    for (int lag = 0; lag < l; ++lag) res.channel_labels.push_back(base + "_lag" + std::to_string(lag));
  }
  return res;
}

}  // namespace ntk
