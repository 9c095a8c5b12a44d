#include <cstdio>
#include <string>

#include "ntk/ntk.hpp"

namespace {

nlohmann::json mm_null_config(std::uint64_t seed) {
  nlohmann::json j = nlohmann::json::parse(R"({
    "segments": {"win_s": 2.0, "mean_interval_s": 4.0},
    "nulls": {"n_perm": 100, "n_surr": 10},
    "synth": {
      "n_subjects": 1, "n_videos": 2, "video_len_s": 410.0,
      "rate_hz": 10.0, "n_channels": 4,
      "tasks": [{"name": "null", "attention_gain": 0.0}]
    }
  })");
  j["seed"] = seed;
  return j;
}

nlohmann::json isc_null_config(std::uint64_t seed) {
  nlohmann::json j = nlohmann::json::parse(R"({
    "segments": {"win_s": 2.0, "mean_interval_s": 4.0},
    "nulls": {"n_perm": 10, "n_surr": 500},
    "synth": {
      "n_subjects": 2, "n_videos": 3, "video_len_s": 60.0,
      "rate_hz": 10.0, "n_channels": 4,
      "tasks": [{"name": "null", "attention_gain": 0.0}]
    }
  })");
  j["seed"] = seed;
  return j;
}

}  // namespace

int main() {
  int mm_in = 0, isc_in = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const ntk::RunReport r = ntk::run_experiment(ntk::parse_config(mm_null_config(seed)));
    const ntk::MmEntry& e = r.mm.front();
    if (e.accuracy >= e.bound_lo && e.accuracy <= e.bound) ++mm_in;
    if (seed % 10 == 0) std::printf("mm %3llu: %d\n", (unsigned long long)seed, mm_in);
    std::fflush(stdout);
  }
  std::printf("MM coverage: %d/100\n", mm_in);
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const ntk::RunReport r = ntk::run_experiment(ntk::parse_config(isc_null_config(seed)));
    const ntk::IscEntry& e = r.isc.front();
    if (e.mean_isc < e.bound) ++isc_in;
    if (seed % 10 == 0) std::printf("isc %3llu: %d\n", (unsigned long long)seed, isc_in);
    std::fflush(stdout);
  }
  std::printf("ISC coverage: %d/100\n", isc_in);
  return 0;
}
