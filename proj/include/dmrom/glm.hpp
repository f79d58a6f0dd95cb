// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "dmrom/ingest.hpp"
#include "json.hpp"

namespace dmrom {

struct Epoch {
  std::string condition;
  Eigen::Index start = 0;  // inclusive scan index
  Eigen::Index end = 0;    // exclusive
};

/// Boxcar indicators: U(i, j) = 1 iff time i lies in an epoch of condition j.
StimulusMatrix build_design_matrix(const std::vector<Epoch>& epochs, Eigen::Index n,
                                   const std::vector<std::string>& conditions);

/// Causal convolution of every design column with `kernel` (kernel[0] is lag 0).
StimulusMatrix convolve_design(const StimulusMatrix& u, const std::vector<double>& kernel);

/// One value per line, or a single-column CSV with header.
std::vector<double> load_kernel(const std::filesystem::path& path);

struct GlmFit {
  Eigen::MatrixXd betas;      // M x p
  Eigen::MatrixXd residuals;  // N x M
  Eigen::Index dof = 0;       // N - rank(U)
  Eigen::Index rank = 0;
  Eigen::VectorXd sigma2;     // M residual variances, |e|^2 / dof
};

/// Minimum-norm least squares per channel via a complete orthogonal
/// decomposition of U.
GlmFit fit_glm(const TimeSeriesMatrix& x, const StimulusMatrix& u);

struct ContrastResult {
  Eigen::VectorXd contrast;
  Eigen::VectorXd t_values;  // +-inf when the residual variance vanishes
  Eigen::VectorXd p_values;  // two-sided
};

ContrastResult contrast_tstat(const GlmFit& fit, const StimulusMatrix& u,
                              const Eigen::VectorXd& c);

/// Two-sided tail probability of Student's t with `dof` degrees of freedom.
double two_sided_p(double t, double dof);

struct EpochConfig {
  std::vector<std::string> conditions;
  std::vector<Epoch> epochs;
};

/// {"conditions": [...], "epochs": [{"condition", "start", "end"}, ...]}.
/// When "conditions" is absent the names are taken in first-seen order.
EpochConfig epoch_config_from_json(const nlohmann::json& j);

/// CSV: channel, beta_<condition>..., t, p, pass.
void write_glm_report(const std::filesystem::path& path, const TimeSeriesMatrix& x,
                      const StimulusMatrix& u, const GlmFit& fit,
                      const ContrastResult& contrast, double threshold);

}  // namespace dmrom
