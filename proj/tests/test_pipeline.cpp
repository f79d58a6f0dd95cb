// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "dmrom/error.hpp"
#include "dmrom/io.hpp"
#include "dmrom/pipeline.hpp"
#include "support.hpp"

using namespace dmrom;
using namespace dmrom::pipeline;
using nlohmann::json;

namespace {

json small_config(const std::string& out) {
  json j = json::parse(R"({
    "seed": 4,
    "synth": {"q": 2, "M": 12, "N": 120},
    "split": {"n_train": 100},
    "dmaps": {"k": 8},
    "parsimony": {"d": 2},
    "fnn": {"hidden_sizes": [3], "decay_values": [1e-4], "folds": 3, "repeats": 1,
            "max_epochs": 150, "optimizer": "lbfgs"}
  })");
  j["output_dir"] = out;
  return j;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DMROM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config: defaults follow the reference protocol") {
  const auto c = config_from_json(json::parse(R"({"input": "x.csv"})"), "/data");
  CHECK(c.input == std::filesystem::path("/data/x.csv"));
  CHECK(c.split.n_train == 280);
  CHECK(c.dmaps.alpha == 1.0);
  CHECK(c.dmaps.t == 0);
  CHECK(c.dmaps.k == 30);
  CHECK_FALSE(c.dmaps.sigma.has_value());
  CHECK(c.parsimony.d == 5);
  CHECK(c.koopman.svd_tol == 1e-10);
  CHECK(c.gh.eig_floor == 1e-8);
  CHECK(c.nrw_mode == NrwMode::reduced_then_lift);
  CHECK(c.fnn.folds == 10);
  CHECK(c.fnn.repeats == 10);
}

TEST_CASE("config: validation errors") {
  CHECK_THROWS_AS(config_from_json(json::parse(R"({})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"input": "x", "bogus": 1})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"input": "x", "dmaps": {"sigma": -1}})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"input": "x", "dmaps": {"sigma": "wide"}})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"input": "x", "dmaps": {"alpha": 2}})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"input": "x", "parsimony": {"d": 40}})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"input": "x", "fnn": {"folds": 1}})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"input": "x", "nrw": {"mode": "q"}})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"input": "x", "split": {"n_train": "a"}})")), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/run.json"), ValidationError);
}

TEST_CASE("config: hash ignores the output directory but tracks everything else") {
  auto a = config_from_json(small_config("a"));
  auto b = config_from_json(small_config("b"));
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  b.set_seed(5);
  CHECK(a.hash() != b.hash());
  CHECK(b.synth->seed == 5);
  CHECK(b.fnn.seed == 5);
  const auto round = config_from_json(a.to_json());
  CHECK(round.hash() == a.hash());
}

TEST_CASE("pipeline: end to end on a small synthetic run, deterministic and stage isolated") {
  testing::TempDir dir;
  const auto cfg = config_from_json(small_config((dir / "run1").string()));
  std::ostringstream log;
  cmd_run_all(cfg, log);
  const Layout layout{cfg.output_dir};

  CHECK(log.str().find("embed: selected") != std::string::npos);
  CHECK(io::read_json(layout.embedding() / "meta.json").at("config_hash") == cfg.hash());
  for (const auto& sub : {layout.data(), layout.models(), layout.forecasts(), layout.reports()})
    CHECK(io::read_json(sub / "meta.json").at("config_hash") == cfg.hash());
  CHECK(std::filesystem::exists(layout.models() / "fnn_1.json"));
  CHECK(std::filesystem::exists(layout.models() / "fnn_2.json"));
  CHECK_FALSE(std::filesystem::exists(layout.models() / "fnn_3.json"));
  CHECK(std::filesystem::exists(layout.reports() / "fnn_cv_1.csv"));
  const auto koop = io::read_json(layout.models() / "koopman.json");
  CHECK(io::matrix_from_json(koop.at("U_hat"), "U").rows() == 2);
  CHECK(io::matrix_from_json(koop.at("U_hat"), "U").cols() == 2);
  const auto fnn_red = io::read_csv(layout.forecasts() / "fnn_gh_reduced.csv");
  CHECK(fnn_red.values.rows() == 20);
  CHECK(fnn_red.values.cols() == 2);
  for (const char* m : {"fnn_gh", "koopman", "nrw"}) {
    const auto amb = io::read_csv(layout.forecasts() / (std::string(m) + "_ambient.csv"));
    CHECK(amb.values.rows() == 20);
    CHECK(amb.values.cols() == 12);
  }
  std::istringstream cmp(testing::read_text(layout.reports() / "comparison.csv"));
  int lines = 0;
  for (std::string line; std::getline(cmp, line);) ++lines;
  CHECK(lines == 1 + 12 * 3);
  CHECK_FALSE(std::filesystem::exists(layout.root / ".lock"));

  // Same config elsewhere: identical bytes.
  const auto cfg2 = config_from_json(small_config((dir / "run2").string()));
  std::ostringstream log2;
  cmd_run_all(cfg2, log2);
  CHECK(testing::snapshot(cfg.output_dir) == testing::snapshot(cfg2.output_dir));

  // Deleting downstream artifacts and re-running them reproduces them.
  const auto before = testing::snapshot(cfg.output_dir);
  std::filesystem::remove_all(layout.forecasts());
  std::filesystem::remove(layout.reports() / "comparison.csv");
  std::filesystem::remove(layout.reports() / "plot_data.csv");
  cmd_forecast_evaluate(cfg, log);
  CHECK(testing::snapshot(cfg.output_dir) == before);
  std::filesystem::remove_all(layout.models());
  cmd_train(cfg, TrainMethod::fnn, log);
  cmd_train(cfg, TrainMethod::koopman, log);
  cmd_forecast(cfg, log);
  cmd_evaluate(cfg, log);
  CHECK(testing::snapshot(cfg.output_dir) == before);

  // Mutating the test split after the fact changes only NRW.
  auto test = io::read_csv(layout.embedding() / "series_test.csv");
  test.values.array() += 0.25;
  io::write_csv(layout.embedding() / "series_test.csv", test.header, test.values);
  cmd_forecast(cfg, log);
  auto stored = [&](const std::string& name) {
    for (const auto& [path, bytes] : before)
      if (path == name) return bytes;
    return std::string{};
  };
  for (const char* f : {"fnn_gh_ambient.csv", "fnn_gh_reduced.csv", "koopman_ambient.csv", "koopman_reduced.csv"})
    CHECK(testing::read_text(layout.forecasts() / f) == stored(std::string("forecasts/") + f));
  CHECK(testing::read_text(layout.forecasts() / "nrw_ambient.csv") != stored("forecasts/nrw_ambient.csv"));
}

TEST_CASE("pipeline: only the requested method is trained") {
  testing::TempDir dir;
  const auto cfg = config_from_json(small_config((dir / "run").string()));
  std::ostringstream log;
  cmd_synth(cfg, log);
  cmd_embed(cfg, log);
  cmd_train(cfg, TrainMethod::koopman, log);
  const Layout layout{cfg.output_dir};
  CHECK(std::filesystem::exists(layout.models() / "koopman.json"));
  CHECK_FALSE(std::filesystem::exists(layout.models() / "fnn_1.json"));
  CHECK(std::filesystem::exists(layout.reports() / "koopman_spectrum.csv"));
  // NRW in reduced mode needs the lift model.
  CHECK_THROWS_AS(cmd_forecast(cfg, log), ValidationError);
}

TEST_CASE("pipeline: stage-labelled errors") {
  testing::TempDir dir;
  auto j = small_config((dir / "run").string());
  j["dmaps"]["k"] = 100;
  j["parsimony"]["d"] = 2;
  const auto cfg = config_from_json(j);
  std::ostringstream log;
  cmd_synth(cfg, log);
  try {
    cmd_embed(cfg, log);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).rfind("[dmaps]", 0) == 0);
  }

  auto j2 = small_config((dir / "run").string());
  j2["split"]["n_train"] = 120;
  const std::string msg = message_of([&] { cmd_embed(config_from_json(j2), log); });
  CHECK(msg.find("empty test set") != std::string::npos);

  CHECK_THROWS_AS(cmd_train(config_from_json(small_config((dir / "none").string())), TrainMethod::both, log),
                  ValidationError);
}

TEST_CASE("pipeline: corrupt bundles are named") {
  testing::TempDir dir;
  const auto cfg = config_from_json(small_config((dir / "run").string()));
  std::ostringstream log;
  cmd_synth(cfg, log);
  cmd_embed(cfg, log);
  const Layout layout{cfg.output_dir};
  testing::write_text(layout.embedding() / "eigenvalues.csv", "lambda\n1\n0.5\n");
  const std::string msg = message_of([&] { cmd_train(cfg, TrainMethod::koopman, log); });
  CHECK(msg.find("eigenvalues.csv") != std::string::npos);
  cmd_embed(cfg, log);
  testing::write_text(layout.embedding() / "coords_train.csv", "psi_1\n1\n");
  CHECK(message_of([&] { cmd_train(cfg, TrainMethod::koopman, log); }).find("embedding") != std::string::npos);
}

TEST_CASE("pipeline: the run directory is locked") {
  testing::TempDir dir;
  const auto cfg = config_from_json(small_config((dir / "run").string()));
  RunLock held(cfg.output_dir);
  std::ostringstream log;
  CHECK(message_of([&] { cmd_synth(cfg, log); }).find("locked") != std::string::npos);
}

TEST_CASE("pipeline: dead channels are an error unless dropping is enabled") {
  testing::TempDir dir;
  Eigen::MatrixXd x = testing::gaussian_matrix(60, 4, 30);
  x.col(2).setConstant(7.0);
  io::write_csv(dir / "x.csv", {"a", "b", "dead", "c"}, x);
  json j = {{"input", "x.csv"}, {"output_dir", "run"}, {"split", {{"n_train", 50}}},
            {"dmaps", {{"k", 5}}}, {"parsimony", {{"d", 2}}}};
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_embed(config_from_json(j, dir.path()), log), ValidationError);
  j["drop_dead_channels"] = true;
  testing::WarningCapture warnings;
  cmd_embed(config_from_json(j, dir.path()), log);
  CHECK(warnings.contains("dead"));
  const auto train = io::read_csv(dir / "run" / "embedding" / "series_train.csv");
  CHECK(train.header == std::vector<std::string>{"a", "b", "c"});
  CHECK(io::read_json(dir / "run" / "embedding" / "meta.json").at("dropped_channels") ==
        std::vector<std::string>{"dead"});
}

TEST_CASE("pipeline: GLM report and stimulus-driven networks") {
  testing::TempDir dir;
  auto j = small_config((dir / "run").string());
  j["glm"] = json::parse(R"({"conditions": ["task"],
                             "epochs": [{"condition": "task", "start": 10, "end": 30},
                                        {"condition": "task", "start": 60, "end": 80}]})");
  const auto cfg = config_from_json(j);
  std::ostringstream log;
  cmd_run_all(cfg, log);
  const Layout layout{cfg.output_dir};
  CHECK(std::filesystem::exists(layout.reports() / "glm.csv"));
  CHECK(log.str().find("glm:") != std::string::npos);
  const auto stim = io::read_csv(layout.embedding() / "stimulus.csv");
  CHECK(stim.values.rows() == 120);
  CHECK(stim.header == std::vector<std::string>{"task"});
  const auto model = fnn_model_from_json(io::read_json(layout.models() / "fnn_1.json"));
  CHECK(model.inputs() == 3);

  auto j2 = j;
  j2["fnn"]["use_stimulus"] = false;
  j2["output_dir"] = (dir / "run_nostim").string();
  const auto cfg2 = config_from_json(j2);
  cmd_run_all(cfg2, log);
  CHECK(fnn_model_from_json(io::read_json(Layout{cfg2.output_dir}.models() / "fnn_1.json")).inputs() == 2);
}

TEST_CASE("cli: exit codes") {
  testing::TempDir dir;
  CHECK(run_cli("--config " + (dir / "missing.json").string() + " embed") == 2);
  CHECK(run_cli("--bogus") == 2);
  testing::write_text(dir / "run.json", small_config((dir / "out").string()).dump());
  CHECK(run_cli("--config " + (dir / "run.json").string() + " train --method svm") == 2);
  CHECK(run_cli("--config " + (dir / "run.json").string() + " synth") == 0);
  CHECK(std::filesystem::exists(dir / "out" / "data" / "synthetic.csv"));
  CHECK(run_cli("--config " + (dir / "run.json").string() + " forecast") == 2);
  CHECK(run_cli("--config " + (dir / "run.json").string() + " --output-dir /proc/dmrom_denied synth") == 1);
}
