// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include <limits>

#include "doctest.h"
#include "dmrom/error.hpp"
#include "dmrom/ingest.hpp"
#include "dmrom/io.hpp"
#include "support.hpp"

using namespace dmrom;
using testing::TempDir;

namespace {

double column_sd(const Eigen::VectorXd& v) {
  const double mean = v.sum() / static_cast<double>(v.size());
  double ss = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) ss += (v(i) - mean) * (v(i) - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("csv: a 3x2 file parses with its header") {
  TempDir dir;
  testing::write_text(dir / "x.csv", "a,b\n1,2\n3,4\n5,6\n");
  const auto x = load_timeseries(dir / "x.csv");
  CHECK(x.n_times() == 3);
  CHECK(x.n_channels() == 2);
  CHECK(x.channel_names == std::vector<std::string>{"a", "b"});
  CHECK(x.values(2, 1) == 6.0);
  CHECK(x.values(1, 0) == 3.0);
}

TEST_CASE("csv: non-numeric cell is reported by position") {
  TempDir dir;
  testing::write_text(dir / "x.csv", "a,b\n1,2\nfoo,4\n5,6\n");
  try {
    load_timeseries(dir / "x.csv");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("(2,1)") != std::string::npos);
  }
}

TEST_CASE("csv: ragged rows, empty files and missing files are errors") {
  TempDir dir;
  testing::write_text(dir / "ragged.csv", "a,b\n1,2\n3\n");
  CHECK_THROWS_AS(load_timeseries(dir / "ragged.csv"), ValidationError);
  testing::write_text(dir / "empty.csv", "");
  CHECK_THROWS_AS(load_timeseries(dir / "empty.csv"), ValidationError);
  CHECK_THROWS_AS(load_timeseries(dir / "nope.csv"), ValidationError);
  testing::write_text(dir / "one.csv", "a\n1\n");
  CHECK_THROWS_AS(load_timeseries(dir / "one.csv"), ValidationError);
  testing::write_text(dir / "nan.csv", "a\n1\nnan\n");
  CHECK_THROWS_AS(load_timeseries(dir / "nan.csv"), ValidationError);
}

TEST_CASE("csv: write then load is bit exact") {
  TempDir dir;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    TimeSeriesMatrix x;
    x.values = testing::gaussian_matrix(7, 4, seed);
    x.values(0, 0) = std::numeric_limits<double>::denorm_min();
    x.values(1, 1) = -1e300;
    x.values(2, 2) = 0.1 + 0.2;
    x.values *= static_cast<double>(seed);
    x.channel_names = {"c0", "c1", "c2", "c3"};
    write_timeseries(dir / "rt.csv", x);
    const auto back = load_timeseries(dir / "rt.csv");
    REQUIRE(back.values.rows() == 7);
    for (Eigen::Index i = 0; i < 7; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) CHECK(back.values(i, j) == x.values(i, j));
    CHECK(back.channel_names == x.channel_names);
  }
}

TEST_CASE("format_double writes the shortest round-trip form") {
  CHECK(io::format_double(0.5) == "0.5");
  CHECK(io::format_double(1.0) == "1");
  CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(io::format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("detrend: a pure line has zero variance and is rejected") {
  TimeSeriesMatrix x;
  x.values.resize(6, 2);
  for (Eigen::Index i = 0; i < 6; ++i) {
    x.values(i, 0) = static_cast<double>(i % 2);
    x.values(i, 1) = 2.0 + 3.0 * static_cast<double>(i);
  }
  x.channel_names = {"ok", "line"};
  try {
    detrend_standardize(x);
    FAIL("expected an error");
  } catch (const ConstantChannelError& e) {
    CHECK(e.channel() == 1);
  }
  const auto dead = dead_channels(x);
  REQUIRE(dead.size() == 1);
  CHECK(dead[0] == 1);
  const auto kept = drop_channels(x, dead);
  CHECK(kept.channel_names == std::vector<std::string>{"ok"});
  CHECK_NOTHROW(detrend_standardize(kept));
}

TEST_CASE("detrend: [0,1,0,1] has mean 0 and unit sd") {
  TimeSeriesMatrix x;
  x.values.resize(4, 1);
  x.values << 0, 1, 0, 1;
  x.channel_names = {"a"};
  const auto y = detrend_standardize(x);
  CHECK(std::abs(y.values.col(0).mean()) < 1e-15);
  CHECK(column_sd(y.values.col(0)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("detrend: random columns are centred and scaled, trend removed") {
  TimeSeriesMatrix x;
  x.values = testing::random_matrix(100, 5, 3, -5.0, 5.0);
  for (Eigen::Index i = 0; i < 100; ++i) x.values.row(i).array() += 0.3 * static_cast<double>(i);
  x.channel_names = {"a", "b", "c", "d", "e"};
  const auto y = detrend_standardize(x);
  Eigen::VectorXd t(100);
  for (Eigen::Index i = 0; i < 100; ++i) t(i) = static_cast<double>(i) - 49.5;
  for (Eigen::Index c = 0; c < 5; ++c) {
    CHECK(std::abs(y.values.col(c).mean()) < 1e-10);
    CHECK(std::abs(column_sd(y.values.col(c)) - 1.0) < 1e-10);
    CHECK(std::abs(y.values.col(c).dot(t)) < 1e-9);
  }
}

TEST_CASE("detrend: statistics can be fit on a leading block only") {
  TimeSeriesMatrix x;
  x.values = testing::random_matrix(50, 3, 9);
  x.channel_names = {"a", "b", "c"};
  const auto y = detrend_standardize(x, 30);
  for (Eigen::Index c = 0; c < 3; ++c) {
    const Eigen::VectorXd head = y.values.col(c).head(30);
    CHECK(std::abs(head.mean()) < 1e-12);
    CHECK(std::abs(column_sd(head) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(detrend_standardize(x, 1), ValidationError);
}

TEST_CASE("split: sizes and partition identity") {
  TimeSeriesMatrix x;
  x.values = testing::random_matrix(360, 3, 4);
  x.channel_names = {"a", "b", "c"};
  auto [train, test] = split_train_test(x, SplitSpec{});
  CHECK(train.n_times() == 280);
  CHECK(test.n_times() == 80);
  Eigen::MatrixXd joined(360, 3);
  joined << train.values, test.values;
  CHECK(joined == x.values);
  CHECK(test.channel_names == x.channel_names);

  TimeSeriesMatrix small;
  small.values = testing::random_matrix(10, 1, 5);
  small.channel_names = {"a"};
  CHECK(split_train_test(small, {9}).second.n_times() == 1);
  CHECK_THROWS_AS(split_train_test(small, {10}), ValidationError);
  CHECK_THROWS_AS(split_train_test(small, {1}), ValidationError);
}

TEST_CASE("synth: validation") {
  SynthConfig c;
  c.intrinsic_dim = 2;
  c.ambient_dim = 1;
  c.dynamics = SynthDynamics::linear_stable;
  CHECK_THROWS_AS(generate_synthetic(c), ValidationError);
  c.ambient_dim = 5;
  c.intrinsic_dim = 4;
  CHECK_THROWS_AS(generate_synthetic(c), ValidationError);
  c.intrinsic_dim = 2;
  c.noise = -1.0;
  CHECK_THROWS_AS(generate_synthetic(c), ValidationError);
  CHECK_THROWS_AS(parse_dynamics("chaotic"), ValidationError);
}

TEST_CASE("synth: noise-free limit cycle lies on the unit circle and embeds exactly") {
  SynthConfig c;
  c.seed = 11;
  const auto [x, truth] = generate_synthetic(c);
  CHECK(x.n_times() == 400);
  CHECK(x.n_channels() == 50);
  for (Eigen::Index i = 0; i < truth.latent.rows(); ++i) CHECK(truth.latent.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((x.values - truth.embed(truth.latent)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("synth: an off-cycle start is attracted to the cycle") {
  SynthConfig c;
  c.initial_radius = 0.3;
  c.n_times = 300;
  const auto truth = generate_synthetic(c).second;
  CHECK(truth.latent.row(0).norm() == doctest::Approx(0.3));
  CHECK(std::abs(truth.latent.row(299).norm() - 1.0) < 1e-8);
}

TEST_CASE("synth: linear_stable contracts, q = 3 adds a decaying coordinate") {
  SynthConfig c;
  c.dynamics = SynthDynamics::linear_stable;
  c.intrinsic_dim = 3;
  c.contraction = 0.9;
  c.n_times = 50;
  const auto truth = generate_synthetic(c).second;
  REQUIRE(truth.latent.cols() == 3);
  CHECK(truth.latent.row(49).norm() < truth.latent.row(0).norm() * 1e-1);
  CHECK(truth.latent.row(1).head(2).norm() == doctest::Approx(0.9 * truth.latent.row(0).head(2).norm()));
}

TEST_CASE("synth: same seed is bit identical, other seeds differ, noise is seeded") {
  SynthConfig c;
  c.noise = 0.1;
  c.seed = 5;
  const auto a = generate_synthetic(c).first;
  const auto b = generate_synthetic(c).first;
  CHECK(a.values == b.values);
  c.seed = 6;
  CHECK(generate_synthetic(c).first.values != a.values);
}

TEST_CASE("synth: truth document round-trips") {
  SynthConfig c;
  c.seed = 3;
  c.ambient_dim = 6;
  c.n_times = 20;
  const auto truth = generate_synthetic(c).second;
  const auto back = synth_truth_from_json(synth_truth_to_json(truth));
  CHECK(back.latent == truth.latent);
  CHECK(back.frequencies == truth.frequencies);
  CHECK(back.phases == truth.phases);
  CHECK(back.embed(back.latent) == truth.embed(truth.latent));
}

TEST_CASE("json matrices: ragged input is rejected") {
  CHECK_THROWS_AS(io::matrix_from_json(nlohmann::json::parse("[[1,2],[3]]"), "m"), ValidationError);
  CHECK_THROWS_AS(io::matrix_from_json(nlohmann::json::parse("[[1,\"x\"]]"), "m"), ValidationError);
  const Eigen::MatrixXd m = testing::gaussian_matrix(3, 2, 1);
  CHECK(io::matrix_from_json(io::matrix_to_json(m), "m") == m);
}
