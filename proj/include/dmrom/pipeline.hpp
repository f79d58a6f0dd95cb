// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dmrom/evaluate.hpp"
#include "dmrom/glm.hpp"
#include "dmrom/ingest.hpp"
#include "dmrom/rom_fnn.hpp"
#include "json.hpp"

namespace dmrom::pipeline {

struct DmapsConfig {
  std::optional<double> sigma;  // unset: auto rule
  double alpha = 1.0;
  int t = 0;
  Eigen::Index k = 30;
};

struct ParsimonyConfig {
  Eigen::Index d = 5;
  double scale_fraction = 1.0 / 3.0;
};

struct KoopmanConfig {
  double svd_tol = 1e-10;
  bool stimulus_observables = false;
  // "fit": reduced forecast from modes fitted to the coordinates;
  // "restrict": Nystrom restriction of the ambient forecast.
  std::string reduced_modes = "fit";
};

struct GhConfig {
  std::optional<double> sigma;
  double eig_floor = 1e-8;
};

struct GlmConfig {
  std::optional<EpochConfig> epochs;
  std::vector<double> contrast;  // empty: all ones
  double threshold = 0.001;
  std::optional<std::filesystem::path> hrf_kernel;
};

/// Full pipeline configuration. Defaults reproduce the reference protocol:
/// 280 training points, alpha 1, t 0, k 30, d 5.
struct RunConfig {
  std::filesystem::path input;
  std::filesystem::path output_dir = "run";
  std::uint64_t seed = 0;
  std::optional<SynthConfig> synth;
  std::optional<std::filesystem::path> stimulus;  // CSV, N x p, alternative to epochs
  bool drop_dead_channels = false;
  bool standardize_train_only = false;
  SplitSpec split{};
  GlmConfig glm;
  bool fnn_use_stimulus = true;
  DmapsConfig dmaps;
  ParsimonyConfig parsimony;
  TrainConfig fnn;
  KoopmanConfig koopman;
  GhConfig gh;
  NrwMode nrw_mode = NrwMode::reduced_then_lift;
  bool synth_seed_explicit = false;

  /// Sets the run seed and everything derived from it (network training, and
  /// the synthetic generator unless the document pinned its own seed).
  void set_seed(std::uint64_t s);

  /// Normalized document with every default filled in.
  nlohmann::json to_json() const;
  /// Stable 16-hex-digit hash of to_json() without output_dir.
  std::string hash() const;
};

/// Relative paths in the document resolve against `base_dir`.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

enum class TrainMethod { fnn, koopman, both };

struct Layout {
  std::filesystem::path root;
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path embedding() const { return root / "embedding"; }
  std::filesystem::path models() const { return root / "models"; }
  std::filesystem::path forecasts() const { return root / "forecasts"; }
  std::filesystem::path reports() const { return root / "reports"; }
};

/// Every command prefixes errors with the failing stage ("[dmaps] ...") and
/// keeps the ValidationError / NumericalError distinction. Progress text
/// goes to `log`.
void cmd_synth(const RunConfig& cfg, std::ostream& log);
void cmd_glm(const RunConfig& cfg, std::ostream& log);
void cmd_embed(const RunConfig& cfg, std::ostream& log);
void cmd_train(const RunConfig& cfg, TrainMethod method, std::ostream& log);
void cmd_forecast(const RunConfig& cfg, std::ostream& log);
void cmd_evaluate(const RunConfig& cfg, std::ostream& log);
void cmd_forecast_evaluate(const RunConfig& cfg, std::ostream& log);
void cmd_run_all(const RunConfig& cfg, std::ostream& log);

/// Exclusive lock on a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace dmrom::pipeline
