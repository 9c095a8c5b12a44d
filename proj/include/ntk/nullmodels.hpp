#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <unsupported/Eigen/FFT>
#include <vector>

#include "ntk/numcore.hpp"
#include "ntk/rng.hpp"
#include "ntk/timeseries.hpp"

namespace ntk {

/// (seed, draw_index) fully determines a surrogate; draws are independent
/// of evaluation order, so surrogate loops can run in any schedule.
struct SurrogateSeed {
  std::uint64_t seed = 0;
  std::uint64_t draw_index = 0;
};

/// Pairing under a circular shift: element i maps to (i + shift) mod n.
/// shift = 0 (or n) would restore the true pairing and is rejected.
inline std::vector<std::size_t> circular_permute_pairing(std::size_t n, std::size_t shift) {
  require(n >= 2, errc::shift_out_of_range, "need at least two segments to permute");
  require(shift >= 1 && shift <= n - 1, errc::shift_out_of_range,
          "shift must lie in [1, n-1]");
  std::vector<std::size_t> pairing(n);
  for (std::size_t i = 0; i < n; ++i) pairing[i] = (i + shift) % n;
  return pairing;
}

/// Randomizes the phase of every positive-frequency Fourier coefficient,
/// independently per channel, keeping DC (and the Nyquist bin for even
/// length) real. The amplitude spectrum is preserved.
inline TimeSeriesMatrix phase_scramble(const TimeSeriesMatrix& ts, const SurrogateSeed& ss) {
  ts.validate();
  const Eigen::Index t_len = ts.n_samples();
  require(t_len >= 4, errc::series_too_short, "phase scrambling needs at least 4 samples");

  Eigen::FFT<double> fft;
  Eigen::MatrixXd out(t_len, ts.n_channels());
  std::vector<std::complex<double>> time(static_cast<std::size_t>(t_len));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(t_len));

  for (Eigen::Index c = 0; c < ts.n_channels(); ++c) {
    rng r(derive_seed(ss.seed, "phase_scramble", ss.draw_index, static_cast<std::uint64_t>(c)));
    for (Eigen::Index t = 0; t < t_len; ++t)
      time[static_cast<std::size_t>(t)] = {ts.samples(t, c), 0.0};
    fft.fwd(spec, time);

    // Bins 1 .. ceil(T/2)-1 get fresh phases; the mirror bins get conjugates.
    const Eigen::Index half = (t_len - 1) / 2;
    for (Eigen::Index k = 1; k <= half; ++k) {
      const double phi = 2.0 * std::numbers::pi * r.uniform();
      const std::complex<double> rot(std::cos(phi), std::sin(phi));
      auto& pos = spec[static_cast<std::size_t>(k)];
      pos *= rot;
      spec[static_cast<std::size_t>(t_len - k)] = std::conj(pos);
    }
    // DC (and Nyquist when T is even) stay untouched: real for real input.

    fft.inv(time, spec);
    for (Eigen::Index t = 0; t < t_len; ++t)
      out(t, c) = time[static_cast<std::size_t>(t)].real();
  }
  return ts.with_samples(std::move(out));
}

/// Decoder view of one null trial: pick 0 for the first presented
/// candidate, 1 for the second. Indices refer to a shared segment list.
using PositionDecoder =
    std::function<int(std::size_t eeg_index, std::size_t first_stim, std::size_t second_stim)>;

/// Match-mismatch null: for each circular shift, every trial pairs an
/// EEG segment with a shifted (pseudo-match) stimulus segment plus a
/// second mismatched segment; records the per-shift accuracy of picking
/// the pseudo-match. Presented order is balanced within each shift so a
/// position-constant decoder scores exactly 0.5.
///
/// Shifts: all n-1 if n-1 <= n_perm, otherwise n_perm distinct shifts
/// sampled without replacement (the returned distribution length records
/// the actual count).
inline NullDistribution build_mm_null(const std::vector<Eigen::Index>& segment_starts,
                                      Eigen::Index win_len, const PositionDecoder& decoder,
                                      int n_perm, std::uint64_t seed) {
  const std::size_t n = segment_starts.size();
  require(n >= 3, errc::too_few_segments,
          "MM null needs at least 3 segments so both candidates can mismatch");
  require(n_perm >= 1, errc::config_invalid, "n_perm must be positive");

  std::vector<std::size_t> shifts;
  if (n - 1 <= static_cast<std::size_t>(n_perm)) {
    for (std::size_t s = 1; s <= n - 1; ++s) shifts.push_back(s);
  } else {
    rng pick(derive_seed(seed, "mm_null_shifts"));
    shifts = pick.sample_without_replacement(n - 1, static_cast<std::size_t>(n_perm));
    for (std::size_t& s : shifts) s += 1;  // [0, n-2] -> [1, n-1]
    std::sort(shifts.begin(), shifts.end());
  }

  NullDistribution null;
  null.seed = seed;
  null.method = "circular_permutation";
  null.values.reserve(shifts.size());

  struct NullTrial {
    std::size_t eeg, match, mismatch;
    bool match_first = false;
  };

  for (const std::size_t shift : shifts) {
    rng r(derive_seed(seed, "mm_null", static_cast<std::uint64_t>(shift)));
    std::vector<NullTrial> trials;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = (i + shift) % n;
      std::vector<std::size_t> valid;
      for (std::size_t m = 0; m < n; ++m) {
        if (m == i) continue;  // never reintroduce the true match
        const Eigen::Index gap = segment_starts[m] >= segment_starts[j]
                                     ? segment_starts[m] - segment_starts[j]
                                     : segment_starts[j] - segment_starts[m];
        if (gap < win_len) continue;
        valid.push_back(m);
      }
      if (valid.empty()) continue;
      trials.push_back({i, j, valid[r.uniform_index(valid.size())]});
    }
    if (trials.empty()) continue;

    std::vector<std::size_t> order(trials.size());
    for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
    r.shuffle(order);
    for (std::size_t t = 0; t < order.size(); ++t)
      trials[order[t]].match_first = t < order.size() / 2;

    std::size_t correct = 0;
    for (const NullTrial& tr : trials) {
      const std::size_t first = tr.match_first ? tr.match : tr.mismatch;
      const std::size_t second = tr.match_first ? tr.mismatch : tr.match;
      const int picked = decoder(tr.eeg, first, second);
      if ((picked == 0) == tr.match_first) ++correct;
    }
    null.values.push_back(static_cast<double>(correct) / static_cast<double>(trials.size()));
  }
  require(!null.values.empty(), errc::too_few_segments, "no permutation produced any trial");
  return null;
}

/// ISC null: per draw, every subject's channels are phase-scrambled with
/// independent seeds and the statistic is recomputed by the supplied
/// closure (trained model applied to the surrogates; no refitting).
inline NullDistribution build_isc_null(
    const std::vector<TimeSeriesMatrix>& subjects,
    const std::function<double(const std::vector<TimeSeriesMatrix>&)>& statistic, int n_surr,
    std::uint64_t seed) {
  require(subjects.size() >= 2, errc::fewer_than_two_subjects,
          "ISC null needs at least two subjects");
  require(n_surr >= 1, errc::config_invalid, "n_surr must be positive");

  NullDistribution null;
  null.seed = seed;
  null.method = "phase_scramble";
  null.values.reserve(static_cast<std::size_t>(n_surr));
  for (int d = 0; d < n_surr; ++d) {
    std::vector<TimeSeriesMatrix> scrambled;
    scrambled.reserve(subjects.size());
    for (std::size_t s = 0; s < subjects.size(); ++s)
      scrambled.push_back(phase_scramble(
          subjects[s],
          SurrogateSeed{derive_seed(seed, "isc_null", static_cast<std::uint64_t>(s)),
                        static_cast<std::uint64_t>(d)}));
    null.values.push_back(statistic(scrambled));
  }
  return null;
}

}  // namespace ntk
