// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "dmrom/dmrom.h"

namespace {

void print_line(const char* line, void*) { std::printf("%s\n", line); }

void print_warning(const char* msg, void*) { std::fprintf(stderr, "warning: %s\n", msg); }

int fail(dmrom_status s) {
  std::fprintf(stderr, "error: %s\n", dmrom_last_error());
  return static_cast<int>(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-maps reduced-order modelling pipeline"};
  app.set_version_flag("--version", dmrom_version());
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  uint64_t seed = 0;
  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Override the run seed");
  app.add_option("--output-dir", output_dir, "Override the run directory");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  auto* glm = app.add_subcommand("glm", "Fit the GLM and write the activity report");
  auto* embed = app.add_subcommand("embed", "Diffusion-maps embedding and parsimonious selection");
  auto* train = app.add_subcommand("train", "Train reduced-order models");
  std::string method;
  train->add_option("--method", method, "fnn or koopman (default: both)")
      ->check(CLI::IsMember({"fnn", "koopman"}));
  auto* forecast = app.add_subcommand("forecast", "Forecast the test horizon with every trained model");
  auto* evaluate = app.add_subcommand("evaluate", "Compare forecasts against the test set");
  auto* run = app.add_subcommand("run", "Run pipeline stages");
  bool all = false;
  run->add_flag("--all", all, "Run every stage end to end")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  dmrom_set_warning_handler(print_warning, nullptr);
  dmrom_config* cfg = nullptr;
  if (auto s = dmrom_config_load(config_path.c_str(), &cfg); s != DMROM_OK) return fail(s);
  if (*seed_opt) dmrom_config_set_seed(cfg, seed);
  if (!output_dir.empty()) {
    if (auto s = dmrom_config_set_output_dir(cfg, output_dir.c_str()); s != DMROM_OK) {
      dmrom_config_free(cfg);
      return fail(s);
    }
  }

  dmrom_command cmd = DMROM_CMD_RUN_ALL;
  if (synth->parsed()) cmd = DMROM_CMD_SYNTH;
  else if (glm->parsed()) cmd = DMROM_CMD_GLM;
  else if (embed->parsed()) cmd = DMROM_CMD_EMBED;
  else if (train->parsed()) cmd = method == "fnn" ? DMROM_CMD_TRAIN_FNN
                                  : method == "koopman" ? DMROM_CMD_TRAIN_KOOPMAN
                                                        : DMROM_CMD_TRAIN_ALL;
  else if (forecast->parsed()) cmd = DMROM_CMD_FORECAST;
  else if (evaluate->parsed()) cmd = DMROM_CMD_EVALUATE;
  else if (run->parsed()) cmd = DMROM_CMD_RUN_ALL;

  const dmrom_status s = dmrom_run_command(cfg, cmd, print_line, nullptr);
  dmrom_config_free(cfg);
  if (s != DMROM_OK) return fail(s);
  return 0;
}
