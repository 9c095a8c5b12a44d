#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ntk/ntk.hpp"

using Catch::Approx;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ntk_io_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

ntk::TimeSeriesMatrix sample_ts() {
  ntk::rng r(5150);
  Eigen::MatrixXd m(50, 3);
  for (Eigen::Index t = 0; t < 50; ++t)
    for (Eigen::Index c = 0; c < 3; ++c) m(t, c) = r.uniform(-5.0, 5.0);
  return {std::move(m), 30.0, {"oz", "pz", "cz"}, "vid7"};
}

}  // namespace

TEST_CASE("timeseries survives the float32 payload round trip") {
  const ntk::TimeSeriesMatrix ts = sample_ts();
  const std::string path = scratch("ts1");
  ntk::store_timeseries(ts, path);
  const ntk::TimeSeriesMatrix back = ntk::load_timeseries(path);
  REQUIRE(back.samples.rows() == 50);
  REQUIRE(back.samples.cols() == 3);
  CHECK(back.rate_hz == 30.0);
  CHECK(back.channel_labels == std::vector<std::string>{"oz", "pz", "cz"});
  CHECK(back.video_id == "vid7");
  CHECK((back.samples - ts.samples).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("timeseries loader rejects missing, mislabeled, and truncated files") {
  try {
    ntk::load_timeseries(scratch("does_not_exist"));
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::io_error);
  }

  const ntk::TimeSeriesMatrix ts = sample_ts();
  const std::string bad_magic = scratch("ts_badmagic");
  ntk::store_timeseries(ts, bad_magic);
  std::string header = ntk::read_text_file(bad_magic + ".json");
  const auto pos = header.find("ntk1");
  header.replace(pos, 4, "nope");
  ntk::write_text_file(bad_magic + ".json", header);
  try {
    ntk::load_timeseries(bad_magic);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::format_error);
  }

  const std::string trunc = scratch("ts_trunc");
  ntk::store_timeseries(ts, trunc);
  {
    std::ofstream out(trunc, std::ios::binary | std::ios::trunc);
    const char bytes[40] = {};
    out.write(bytes, sizeof(bytes));
  }
  try {
    ntk::load_timeseries(trunc);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::format_error);
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

TEST_CASE("csv import handles headers, bare numbers, and malformed rows") {
  const std::string path = scratch("data.csv");
  ntk::write_text_file(path, "left,right\n1.5,2\n-3,4.25\n");
  const ntk::TimeSeriesMatrix ts = ntk::load_timeseries_csv(path, 25.0, "v1");
  CHECK(ts.channel_labels == std::vector<std::string>{"left", "right"});
  CHECK(ts.rate_hz == 25.0);
  CHECK(ts.video_id == "v1");
  REQUIRE(ts.samples.rows() == 2);
  CHECK(ts.samples(0, 0) == 1.5);
  CHECK(ts.samples(1, 1) == 4.25);

  ntk::write_text_file(path, "1,2\n3,4\n");
  const ntk::TimeSeriesMatrix bare = ntk::load_timeseries_csv(path, 25.0);
  CHECK(bare.channel_labels.empty());
  CHECK(bare.samples(1, 0) == 3.0);

  ntk::write_text_file(path, "a,b\n1,2\n3\n");
  try {
    ntk::load_timeseries_csv(path, 25.0);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::format_error);
  }
  ntk::write_text_file(path, "a,b\n1,oops\n");
  try {
    ntk::load_timeseries_csv(path, 25.0);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::format_error);
  }
  ntk::write_text_file(path, "a,b\n");
  try {
    ntk::load_timeseries_csv(path, 25.0);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::format_error);
  }
}

TEST_CASE("gaze csv keeps annotations and blink sentinels intact") {
  std::vector<ntk::GazeSample> gaze = {
      {0.0, 960.123, 540.456, ntk::GazeAnnotation::none},
      {0.016667, 400.0, 200.0, ntk::GazeAnnotation::saccade},
      {0.033333, -9999.0, -9999.0, ntk::GazeAnnotation::blink},
  };
  const std::string path = scratch("gaze.csv");
  ntk::store_gaze_csv(gaze, path);
  const std::vector<ntk::GazeSample> back = ntk::load_gaze_csv(path);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].t == Approx(gaze[i].t).margin(1e-6));
    CHECK(back[i].x == Approx(gaze[i].x).margin(1e-3));
    CHECK(back[i].y == Approx(gaze[i].y).margin(1e-3));
    CHECK(back[i].annotation == gaze[i].annotation);
  }
  CHECK(back[2].x == -9999.0);

  ntk::write_text_file(path, "t_s,x_px,y_px,annotation\n0.0,1.0,2.0,weird\n");
  try {
    ntk::load_gaze_csv(path);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::format_error);
  }
  ntk::write_text_file(path, "time,x,y\n");
  try {
    ntk::load_gaze_csv(path);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::format_error);
  }
}

TEST_CASE("fixation mask json round trip is lossless") {
  ntk::FixationMask mask;
  mask.rate_hz = 30.0;
  mask.video_id = "v03";
  mask.flags = {true, true, false, false, true, false, true, true, true, false};
  mask.blink = {false, false, true, true, false, false, false, false, false, false};
  const std::string path = scratch("mask.json");
  ntk::store_mask_json(mask, path);
  const ntk::FixationMask back = ntk::load_mask_json(path);
  CHECK(back.rate_hz == 30.0);
  CHECK(back.video_id == "v03");
  CHECK(back.flags == mask.flags);
  CHECK(back.blink == mask.blink);

  // a run reaching past the declared length is rejected
  ntk::write_text_file(path,
                       "{\"magic\":\"ntkmask1\",\"rate_hz\":30.0,\"length\":4,"
                       "\"video_id\":\"v\",\"excluded\":[[2,6]],\"blink\":[]}\n");
  try {
    ntk::load_mask_json(path);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::format_error);
  }
}

TEST_CASE("cca model round trip preserves filters exactly") {
  ntk::rng r(99);
  ntk::CcaModel model;
  model.wx = Eigen::MatrixXd(6, 2);
  model.wy = Eigen::MatrixXd(3, 2);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) model.wx(i, j) = r.normal();
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) model.wy(i, j) = r.normal();
  model.eeg_spec = {3, 1};
  model.stim_spec = {1, 0};
  model.reg_lambda = 0.005;
  model.train_correlations = {0.91234567890123, 0.4567890123456789};

  const std::string path = scratch("cca_model");
  ntk::store_cca_model(model, path);
  const ntk::CcaModel back = ntk::load_cca_model(path);
  CHECK((back.wx - model.wx).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.wy - model.wy).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.eeg_spec.num_lags == 3);
  CHECK(back.eeg_spec.offset == 1);
  CHECK(back.stim_spec.num_lags == 1);
  CHECK(back.reg_lambda == 0.005);
  CHECK(back.train_correlations == model.train_correlations);

  // header that promises more correlations than k is rejected
  std::string header = ntk::read_text_file(path + ".json");
  header.replace(header.find("\"k\": 2"), 6, "\"k\": 1");
  ntk::write_text_file(path + ".json", header);
  try {
    ntk::load_cca_model(path);
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::format_error);
  }
}

TEST_CASE("corrca model round trip preserves filters exactly") {
  ntk::rng r(100);
  ntk::CorrCaModel model;
  model.ws = Eigen::MatrixXd(8, 3);
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) model.ws(i, j) = r.normal();
  model.eeg_spec = {4, 2};
  model.reg_lambda = 0.01;
  model.eigenvalues = {2.5, 1.25, 0.125};
  const std::string path = scratch("corrca_model");
  ntk::store_corrca_model(model, path);
  const ntk::CorrCaModel back = ntk::load_corrca_model(path);
  CHECK((back.ws - model.ws).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.eigenvalues == model.eigenvalues);
  CHECK(back.eeg_spec.num_lags == 4);
  CHECK(back.eeg_spec.offset == 2);
  CHECK(back.reg_lambda == 0.01);

  try {
    ntk::load_corrca_model(scratch("missing_model"));
    FAIL();
  } catch (const ntk::error& e) {
    CHECK(e.kind() == ntk::errc::io_error);
  }
}

TEST_CASE("null distribution json round trip") {
  ntk::NullDistribution null;
  null.method = "phase_scramble";
  null.seed = 0xDEADBEEFCAFEULL;
  null.values = {0.015625, -0.25, 0.7071067811865476, 1e-17};
  const std::string path = scratch("null.json");
  ntk::store_null_json(null, path);
  const ntk::NullDistribution back = ntk::load_null_json(path);
  CHECK(back.method == null.method);
  CHECK(back.seed == null.seed);
  CHECK(back.values == null.values);
}

TEST_CASE("trial log is written as a readable csv") {
  std::vector<ntk::TrialLogRow> rows(2);
  rows[0] = {0, "v01", 120, 480, 1.25, 0.5, true};
  rows[1] = {2, "v03", 90, 300, 0.125, 0.625, false};
  const std::string path = scratch("trials.csv");
  ntk::store_trial_log(rows, path);
  const std::string text = ntk::read_text_file(path);
  CHECK(text ==
        "fold,video,start_match,start_mismatch,score_match,score_mismatch,picked\n"
        "0,v01,120,480,1.25,0.5,match\n"
        "2,v03,90,300,0.125,0.625,mismatch\n");
}

TEST_CASE("json hash ignores key order and tracks content") {
  nlohmann::json a{{"alpha", 1}, {"beta", {1, 2, 3}}};
  nlohmann::json b{{"beta", {1, 2, 3}}, {"alpha", 1}};
  CHECK(ntk::json_hash(a) == ntk::json_hash(b));
  nlohmann::json c = a;
  c["alpha"] = 2;
  CHECK(ntk::json_hash(a) != ntk::json_hash(c));
}
