#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "ntk/timeseries.hpp"

namespace ntk {
namespace detail {

/// One second-order section, direct form II transposed, a0 normalized to 1.
struct Sos {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Steady-state filter state for a unit-step input (scaled by the first sample
/// when used), so forward-backward filtering settles immediately.
inline void sos_zi(const Sos& s, double& zi1, double& zi2) {
  const double denom = 1.0 + s.a1 + s.a2;
  zi1 = (s.b1 + s.b2 - (s.a1 + s.a2) * s.b0) / denom;
  zi2 = s.b2 - s.a2 * s.b0 - s.a2 * zi1;
}

inline void sos_filter_inplace(const Sos& s, std::vector<double>& x) {
  double z1, z2;
  sos_zi(s, z1, z2);
  if (!x.empty()) {
    z1 *= x.front();
    z2 *= x.front();
  }
  for (double& v : x) {
    const double in = v;
    const double out = s.b0 * in + z1;
    z1 = s.b1 * in - s.a1 * out + z2;
    z2 = s.b2 * in - s.a2 * out;
    v = out;
  }
}

/// Zero-phase filtering: odd-reflection padding, forward pass, reversed
/// backward pass. pad_hint should cover the impulse-response ring-down of the
/// sections; it is clamped to the signal length.
inline void filtfilt_inplace(const std::vector<Sos>& sections, std::vector<double>& x,
                             std::size_t pad_hint = 0) {
  const std::size_t t_len = x.size();
  if (t_len < 2) return;
  const std::size_t padlen =
      std::min(t_len - 1, std::max(pad_hint, 3 * (2 * sections.size() + 1)));

  std::vector<double> ext;
  ext.reserve(t_len + 2 * padlen);
  for (std::size_t i = 0; i < padlen; ++i) ext.push_back(2.0 * x.front() - x[padlen - i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < padlen; ++i) ext.push_back(2.0 * x.back() - x[t_len - 2 - i]);

  for (const Sos& s : sections) sos_filter_inplace(s, ext);
  std::reverse(ext.begin(), ext.end());
  for (const Sos& s : sections) sos_filter_inplace(s, ext);
  std::reverse(ext.begin(), ext.end());

  std::copy(ext.begin() + static_cast<std::ptrdiff_t>(padlen),
            ext.begin() + static_cast<std::ptrdiff_t>(padlen + t_len), x.begin());
}

/// Butterworth high-pass as second-order sections via bilinear transform.
inline std::vector<Sos> butterworth_highpass(int order, double cutoff_hz, double rate_hz) {
  using cd = std::complex<double>;
  const double warped = 2.0 * rate_hz * std::tan(std::numbers::pi * cutoff_hz / rate_hz);
  const double fs2 = 2.0 * rate_hz;

  std::vector<cd> poles;
  for (int k = 0; k < order; ++k) {
    const double theta =
        std::numbers::pi * (2.0 * k + order + 1.0) / (2.0 * order);  // left half-plane
    const cd lp_pole(std::cos(theta), std::sin(theta));
    const cd hp_pole = warped / lp_pole;
    poles.push_back((fs2 + hp_pole) / (fs2 - hp_pole));  // bilinear
  }

  std::vector<Sos> sections;
  // Conjugate pairs (k, order-1-k); middle pole real when order is odd.
  for (int k = 0; k < order / 2; ++k) {
    const cd p = poles[static_cast<std::size_t>(k)];
    Sos s;
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    // Two zeros at z = 1, scaled for unit gain at Nyquist (z = -1).
    const double gain = (1.0 - s.a1 + s.a2) / 4.0;
    s.b0 = gain;
    s.b1 = -2.0 * gain;
    s.b2 = gain;
    sections.push_back(s);
  }
  if (order % 2 == 1) {
    const cd p = poles[static_cast<std::size_t>(order / 2)];
    Sos s;
    s.a1 = -p.real();
    s.a2 = 0.0;
    const double gain = (1.0 - s.a1) / 2.0;
    s.b0 = gain;
    s.b1 = -gain;
    s.b2 = 0.0;
    sections.push_back(s);
  }
  return sections;
}

/// Second-order IIR notch (unit gain at DC and Nyquist, null at freq_hz).
inline Sos notch_biquad(double freq_hz, double rate_hz, double q) {
  const double w0 = 2.0 * std::numbers::pi * freq_hz / rate_hz;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Sos s;
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * std::cos(w0) / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * std::cos(w0) / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

inline TimeSeriesMatrix filtfilt_all_channels(const TimeSeriesMatrix& ts,
                                              const std::vector<Sos>& sections,
                                              std::size_t pad_hint = 0) {
  Eigen::MatrixXd out(ts.n_samples(), ts.n_channels());
  std::vector<double> buf(static_cast<std::size_t>(ts.n_samples()));
  for (Eigen::Index c = 0; c < ts.n_channels(); ++c) {
    Eigen::VectorXd::Map(buf.data(), ts.n_samples()) = ts.samples.col(c);
    filtfilt_inplace(sections, buf, pad_hint);
    out.col(c) = Eigen::VectorXd::Map(buf.data(), ts.n_samples());
  }
  return ts.with_samples(std::move(out));
}

inline double bessel_i0(double x) {
  // Power series; converges quickly for the beta range used here.
  double sum = 1.0, term = 1.0;
  const double x2 = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= x2 / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

/// Kaiser-window lowpass FIR. half_gain_hz is the -6 dB point; odd length.
inline std::vector<double> kaiser_lowpass(double half_gain_hz, double rate_hz,
                                          double transition_hz, double atten_db) {
  const double beta = atten_db > 50.0
                          ? 0.1102 * (atten_db - 8.7)
                          : (atten_db >= 21.0
                                 ? 0.5842 * std::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0)
                                 : 0.0);
  const double dw = 2.0 * std::numbers::pi * transition_hz / rate_hz;
  int n = static_cast<int>(std::ceil((atten_db - 7.95) / (2.285 * dw)));
  if (n % 2 == 0) ++n;
  const int mid = n / 2;
  const double fc = half_gain_hz / rate_hz;  // cycles per sample
  std::vector<double> h(static_cast<std::size_t>(n));
  const double i0b = bessel_i0(beta);
  for (int k = 0; k < n; ++k) {
    const double m = static_cast<double>(k - mid);
    const double sinc =
        m == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    const double r = 2.0 * m / static_cast<double>(n - 1);
    const double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[static_cast<std::size_t>(k)] = sinc * w;
  }
  return h;
}

/// Best rational p/q ~ x with q bounded, by continued fractions.
inline bool rational_approx(double x, std::int64_t max_den, std::int64_t& p, std::int64_t& q) {
  std::int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double frac = x;
  for (int it = 0; it < 64; ++it) {
    const auto a = static_cast<std::int64_t>(std::floor(frac));
    std::int64_t p2 = a * p1 + p0, q2 = a * q1 + q0;
    if (q2 > max_den) break;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    const double rem = frac - static_cast<double>(a);
    if (rem < 1e-14) break;
    frac = 1.0 / rem;
  }
  p = p1;
  q = q1;
  return q1 >= 1 && std::abs(x - static_cast<double>(p1) / static_cast<double>(q1)) <= 1e-9 * x;
}

}  // namespace detail

/// Zero-phase Butterworth high-pass (4th order).
inline TimeSeriesMatrix highpass(const TimeSeriesMatrix& ts, double cutoff_hz, int order = 4) {
  ts.validate();
  require(cutoff_hz > 0.0 && cutoff_hz < ts.rate_hz / 2.0, errc::cutoff_above_nyquist,
          "high-pass cutoff must lie below Nyquist");
  const auto pad = static_cast<std::size_t>(std::ceil(3.0 * ts.rate_hz / cutoff_hz));
  return detail::filtfilt_all_channels(ts, detail::butterworth_highpass(order, cutoff_hz, ts.rate_hz),
                                       pad);
}

/// Zero-phase IIR notch (Q = 30 by default).
inline TimeSeriesMatrix notch(const TimeSeriesMatrix& ts, double freq_hz, double q = 30.0) {
  ts.validate();
  require(freq_hz > 0.0 && freq_hz < ts.rate_hz / 2.0, errc::freq_above_nyquist,
          "notch frequency must lie below Nyquist");
  const auto pad = static_cast<std::size_t>(std::ceil(q * ts.rate_hz / freq_hz));
  return detail::filtfilt_all_channels(ts, {detail::notch_biquad(freq_hz, ts.rate_hz, q)}, pad);
}

/// Subtracts the per-sample mean across channels.
inline TimeSeriesMatrix average_reference(const TimeSeriesMatrix& ts) {
  ts.validate();
  require(ts.n_channels() >= 2, errc::single_channel, "average reference needs >= 2 channels");
  Eigen::MatrixXd out = ts.samples;
  out.colwise() -= out.rowwise().mean();
  return ts.with_samples(std::move(out));
}

/// Least-squares removal of regressor channels (with intercept) from every
/// channel of ts.
inline TimeSeriesMatrix regress_out(const TimeSeriesMatrix& ts, const TimeSeriesMatrix& regressors) {
  ts.validate();
  regressors.validate();
  require(ts.n_samples() == regressors.n_samples(), errc::length_mismatch,
          "series and regressors differ in length");
  require(ts.rate_hz == regressors.rate_hz, errc::length_mismatch,
          "series and regressors differ in rate");
  for (Eigen::Index c = 0; c < regressors.n_channels(); ++c)
    require(regressors.samples.col(c).cwiseAbs().maxCoeff() > 0.0, errc::degenerate_regressor,
            "regressor channel " + std::to_string(c) + " is identically zero");

  Eigen::MatrixXd design(ts.n_samples(), regressors.n_channels() + 1);
  design.col(0).setOnes();
  design.rightCols(regressors.n_channels()) = regressors.samples;
  const Eigen::MatrixXd coeff = design.colPivHouseholderQr().solve(ts.samples);
  return ts.with_samples(ts.samples - design * coeff);
}

/// Anti-aliased resampling to target_hz (rational ratio): polyphase
/// Kaiser-window FIR low-passed at 0.9 * target/2, then decimated. Output
/// length is round(T * target / rate).
inline TimeSeriesMatrix resample_antialias(const TimeSeriesMatrix& ts, double target_hz) {
  ts.validate();
  require(target_hz > 0.0, errc::config_invalid, "target rate must be positive");
  require(target_hz < ts.rate_hz, errc::upsampling_requested,
          "target rate must be below the input rate");

  std::int64_t up = 0, down = 0;
  require(detail::rational_approx(target_hz / ts.rate_hz, 1 << 20, up, down),
          errc::irrational_ratio, "rate ratio is not a small rational");

  const double rate_up = ts.rate_hz * static_cast<double>(up);
  const double pass_hz = 0.9 * target_hz / 2.0;
  const double stop_hz = target_hz / 2.0;
  std::vector<double> h =
      detail::kaiser_lowpass((pass_hz + stop_hz) / 2.0, rate_up, stop_hz - pass_hz, 60.0);

  // Normalize each polyphase branch to unit DC so constants pass exactly.
  const auto l = static_cast<std::size_t>(up);
  for (std::size_t r = 0; r < l; ++r) {
    double s = 0.0;
    for (std::size_t k = r; k < h.size(); k += l) s += h[k];
    for (std::size_t k = r; k < h.size(); k += l) h[k] /= s;
  }

  const std::int64_t t_in = ts.n_samples();
  const std::int64_t t_out = (2 * t_in * up + down) / (2 * down);
  const std::int64_t delay = static_cast<std::int64_t>(h.size() - 1) / 2;

  Eigen::MatrixXd out(t_out, ts.n_channels());
  for (Eigen::Index c = 0; c < ts.n_channels(); ++c) {
    const double* x = ts.samples.col(c).data();
    for (std::int64_t m = 0; m < t_out; ++m) {
      const std::int64_t center = m * down + delay;  // index in upsampled stream
      double acc = 0.0;
      // Only taps aligned with original samples contribute; edges replicate
      // the boundary sample so each branch keeps its unit DC sum.
      std::int64_t k = center % up;
      for (; k < static_cast<std::int64_t>(h.size()); k += up) {
        const std::int64_t src = std::clamp<std::int64_t>((center - k) / up, 0, t_in - 1);
        acc += h[static_cast<std::size_t>(k)] * x[src];
      }
      out(m, c) = acc;
    }
  }

  TimeSeriesMatrix res = ts.with_samples(std::move(out));
  res.rate_hz = target_hz;
  return res;
}

/// Removes the per-channel mean over the whole (per-video) span.
inline TimeSeriesMatrix center_per_video(const TimeSeriesMatrix& ts) {
  ts.validate();
  Eigen::MatrixXd out = ts.samples;
  out.rowwise() -= out.colwise().mean();
  return ts.with_samples(std::move(out));
}

}  // namespace ntk
