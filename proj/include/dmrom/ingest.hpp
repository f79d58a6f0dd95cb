// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace dmrom {

/// N time points by M channels. Row i is time index i.
struct TimeSeriesMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> channel_names;
  double dt = 1.0;

  Eigen::Index n_times() const { return values.rows(); }
  Eigen::Index n_channels() const { return values.cols(); }

  // Throws ValidationError unless N >= 2, M >= 1, names match, all finite.
  void validate() const;
};

/// N time points by p experimental conditions.
struct StimulusMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> condition_names;

  Eigen::Index n_times() const { return values.rows(); }
  Eigen::Index n_conditions() const { return values.cols(); }
};

struct SplitSpec {
  Eigen::Index n_train = 280;
};

enum class TimeSeriesFormat { csv_wide };

TimeSeriesMatrix load_timeseries(const std::filesystem::path& path,
                                 TimeSeriesFormat format = TimeSeriesFormat::csv_wide);
void write_timeseries(const std::filesystem::path& path, const TimeSeriesMatrix& x);

/// Removes the least-squares line in the time index from every column, then
/// divides by the sample standard deviation (N-1). When `fit_rows` is set,
/// line and scale are estimated on the leading `fit_rows` rows only and
/// applied to the whole series.
/// Throws ConstantChannelError for a column with no variance left.
TimeSeriesMatrix detrend_standardize(const TimeSeriesMatrix& x,
                                     std::optional<Eigen::Index> fit_rows = std::nullopt);

/// Indices of channels that would trip ConstantChannelError.
std::vector<std::size_t> dead_channels(const TimeSeriesMatrix& x,
                                       std::optional<Eigen::Index> fit_rows = std::nullopt);

TimeSeriesMatrix drop_channels(const TimeSeriesMatrix& x,
                               const std::vector<std::size_t>& channels);

std::pair<TimeSeriesMatrix, TimeSeriesMatrix> split_train_test(const TimeSeriesMatrix& x,
                                                                const SplitSpec& spec);

// Synthetic ground truth --------------------------------------------------

enum class SynthDynamics { linear_stable, limit_cycle };

struct SynthConfig {
  int intrinsic_dim = 2;        // q, 2 or 3
  Eigen::Index ambient_dim = 50;  // M
  Eigen::Index n_times = 400;   // N
  double noise = 0.0;
  std::uint64_t seed = 0;
  SynthDynamics dynamics = SynthDynamics::limit_cycle;
  double angular_step = 0.7;    // radians per step on the cycle / spiral
  double contraction = 0.98;    // per-step radial factor of linear_stable
  double feature_scale = 0.5;   // std-dev of the random cosine frequencies
  double initial_radius = 1.0;  // 1 starts exactly on the limit cycle
  double initial_offset = 0.5;  // third coordinate at time 0 when q = 3
};

/// Hidden state plus the embedding x = cos(latent * freq + phase) + noise.
struct SynthTruth {
  Eigen::MatrixXd latent;       // N x q
  Eigen::MatrixXd frequencies;  // q x M
  Eigen::VectorXd phases;       // M
  SynthConfig config;

  Eigen::MatrixXd embed(const Eigen::MatrixXd& latent_points) const;
};

std::pair<TimeSeriesMatrix, SynthTruth> generate_synthetic(const SynthConfig& config);

SynthDynamics parse_dynamics(const std::string& name);
std::string to_string(SynthDynamics d);

nlohmann::json synth_truth_to_json(const SynthTruth& truth);
SynthTruth synth_truth_from_json(const nlohmann::json& j);

}  // namespace dmrom
