#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "ntk/ntk.hpp"

using Catch::Approx;

namespace {

ntk::TimeSeriesMatrix sine(double freq_hz, double rate_hz, double len_s, double dc = 0.0) {
  const auto n = static_cast<Eigen::Index>(std::llround(len_s * rate_hz));
  Eigen::MatrixXd m(n, 1);
  for (Eigen::Index t = 0; t < n; ++t)
    m(t, 0) = dc + std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(t) / rate_hz);
  return {std::move(m), rate_hz};
}

double rms_mid(const ntk::TimeSeriesMatrix& ts) {
  const Eigen::Index n = ts.n_samples();
  const Eigen::Index a = n / 4, b = n - n / 4;
  return std::sqrt(ts.samples.col(0).segment(a, b - a).squaredNorm() /
                   static_cast<double>(b - a));
}

}  // namespace

TEST_CASE("highpass removes drift and keeps the passband") {
  // 0.5 Hz cutoff at 100 Hz: a constant should vanish, a 10 Hz tone survive.
  // Judge steady state away from the filtfilt edge ring-down.
  ntk::TimeSeriesMatrix flat = sine(10.0, 100.0, 20.0, /*dc=*/5.0);
  const ntk::TimeSeriesMatrix hp = ntk::highpass(flat, 0.5);
  CHECK(std::abs(hp.samples.col(0).segment(600, 800).mean()) < 1e-4);

  const double rms_in = rms_mid(sine(10.0, 100.0, 20.0));
  const double rms_out = rms_mid(hp);
  CHECK(rms_out == Approx(rms_in).epsilon(0.02));
  CHECK(hp.rate_hz == 100.0);
}

TEST_CASE("highpass is zero-phase") {
  const ntk::TimeSeriesMatrix in = sine(8.0, 100.0, 10.0);
  const ntk::TimeSeriesMatrix out = ntk::highpass(in, 1.0);
  // cross-correlate at lags -3..3 over the interior: the peak must sit at 0
  const Eigen::Index n = in.n_samples();
  double best = -2.0;
  int best_lag = -99;
  for (int lag = -3; lag <= 3; ++lag) {
    const Eigen::Index a = 300, len = n - 2 * a - 3;
    const double c = ntk::pearson(in.samples.col(0).segment(a, len),
                                  out.samples.col(0).segment(a + lag, len));
    if (c > best) {
      best = c;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
  CHECK(best > 0.99999);
}

TEST_CASE("notch nulls the line frequency and spares neighbors") {
  const ntk::TimeSeriesMatrix hum = sine(50.0, 200.0, 20.0);
  const ntk::TimeSeriesMatrix clean = ntk::notch(hum, 50.0);
  CHECK(rms_mid(clean) < 0.02 * rms_mid(hum));  // > 30 dB down

  const ntk::TimeSeriesMatrix tone = sine(10.0, 200.0, 20.0);
  const ntk::TimeSeriesMatrix kept = ntk::notch(tone, 50.0);
  CHECK(rms_mid(kept) == Approx(rms_mid(tone)).epsilon(0.01));
}

TEST_CASE("average reference zeroes the channel mean per sample") {
  Eigen::MatrixXd m(3, 4);
  m << 1, 2, 3, 4, 5, 5, 5, 5, -2, 0, 2, 8;
  ntk::TimeSeriesMatrix ts{std::move(m), 100.0};
  const ntk::TimeSeriesMatrix ref = ntk::average_reference(ts);
  for (Eigen::Index t = 0; t < 3; ++t) CHECK(ref.samples.row(t).mean() == Approx(0.0).margin(1e-12));
  CHECK(ref.samples(0, 0) == Approx(1.0 - 2.5));
}

TEST_CASE("regress_out removes planted regressor leakage") {
  ntk::rng r(11);
  const Eigen::Index n = 500;
  Eigen::MatrixXd reg(n, 2), sig(n, 3);
  for (Eigen::Index t = 0; t < n; ++t) {
    reg(t, 0) = r.normal();
    reg(t, 1) = r.normal();
    sig(t, 0) = r.normal() + 3.0 * reg(t, 0);
    sig(t, 1) = r.normal() - 2.0 * reg(t, 1) + 0.5;
    sig(t, 2) = r.normal();
  }
  const ntk::TimeSeriesMatrix regressors{std::move(reg), 100.0};
  const ntk::TimeSeriesMatrix cleaned =
      ntk::regress_out(ntk::TimeSeriesMatrix{std::move(sig), 100.0}, regressors);
  // residuals are orthogonal to both regressors
  for (Eigen::Index c = 0; c < 3; ++c)
    for (Eigen::Index k = 0; k < 2; ++k)
      CHECK(std::abs(cleaned.samples.col(c).dot(regressors.samples.col(k))) /
                static_cast<double>(n) <
            1e-10);
  // the untouched channel keeps nearly all its variance
  CHECK(cleaned.samples.col(2).squaredNorm() > 0.9 * 500.0 * 0.8);
}

TEST_CASE("resampler preserves tones and length bookkeeping") {
  const ntk::TimeSeriesMatrix in = sine(5.0, 90.0, 10.0);
  const ntk::TimeSeriesMatrix out = ntk::resample_antialias(in, 30.0);
  CHECK(out.rate_hz == 30.0);
  CHECK(out.n_samples() == 300);  // round(900 * 30/90)

  ntk::TimeSeriesMatrix ref = sine(5.0, 30.0, 10.0);
  const Eigen::Index a = 30, len = 240;  // skip edge transients
  CHECK(ntk::pearson(out.samples.col(0).segment(a, len),
                     ref.samples.col(0).segment(a, len)) > 0.999);
  const double amp_ratio = rms_mid(out) / rms_mid(ref);
  CHECK(amp_ratio == Approx(1.0).epsilon(0.02));
}

TEST_CASE("resampler rejects above-Nyquist content") {
  // 40 Hz tone sampled at 90 Hz would alias to 10 Hz at a 30 Hz output rate
  const ntk::TimeSeriesMatrix in = sine(40.0, 90.0, 10.0);
  const ntk::TimeSeriesMatrix out = ntk::resample_antialias(in, 30.0);
  CHECK(rms_mid(out) < 0.01 * rms_mid(in));
}

TEST_CASE("resampler passes constants exactly") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(450, 2, 3.25);
  const ntk::TimeSeriesMatrix out =
      ntk::resample_antialias(ntk::TimeSeriesMatrix{std::move(m), 90.0}, 30.0);
  const Eigen::Index n = out.n_samples();
  CHECK((out.samples.block(10, 0, n - 20, 2).array() - 3.25).abs().maxCoeff() < 1e-9);
}

TEST_CASE("resampler refuses upsampling") {
  const ntk::TimeSeriesMatrix in = sine(5.0, 30.0, 5.0);
  try {
    ntk::resample_antialias(in, 60.0);
    FAIL("expected upsampling_requested");
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::upsampling_requested);
  }
}

TEST_CASE("center_per_video zeroes channel means") {
  ntk::rng r(3);
  Eigen::MatrixXd m(100, 3);
  for (Eigen::Index t = 0; t < 100; ++t)
    for (Eigen::Index c = 0; c < 3; ++c) m(t, c) = r.normal() + static_cast<double>(c);
  const ntk::TimeSeriesMatrix out = ntk::center_per_video({std::move(m), 50.0});
  for (Eigen::Index c = 0; c < 3; ++c)
    CHECK(std::abs(out.samples.col(c).mean()) < 1e-12);
}
