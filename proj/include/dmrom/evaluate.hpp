// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "dmrom/lifting.hpp"

namespace dmrom {

enum class Method { fnn_gh, koopman, nrw };
std::string to_string(Method m);

enum class NrwMode { reduced_then_lift, ambient };
NrwMode parse_nrw_mode(const std::string& name);
std::string to_string(NrwMode m);

struct ForecastResult {
  Method method = Method::nrw;
  Eigen::MatrixXd reduced;  // h x d, empty for ambient-mode NRW
  Eigen::MatrixXd ambient;  // h x M

  Eigen::Index horizon() const { return ambient.rows(); }
};

/// One-step look-ahead baseline: step 1 repeats `last_train`, step s > 1
/// repeats test row s - 2. In reduced_then_lift mode `last_train` and
/// `test_truth` are reduced coordinates and the path is lifted with `lift`;
/// in ambient mode they are ambient values.
ForecastResult nrw_forecast(const Eigen::VectorXd& last_train, const Eigen::MatrixXd& test_truth,
                            NrwMode mode, const GhLiftModel* lift = nullptr);

struct ErrorRows {
  Eigen::VectorXd rmse;  // per channel
  Eigen::VectorXd l2;
};

/// rmse = sqrt(sum e^2 / h), l2 = sqrt(sum e^2) per column.
ErrorRows error_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

struct ErrorTable {
  std::vector<Method> methods;
  std::vector<std::string> channels;
  Eigen::MatrixXd rmse;           // M x methods
  Eigen::MatrixXd l2;             // M x methods
  Eigen::MatrixX<bool> best;      // lowest RMSE per channel, ties all flagged

  /// Fraction of channels where `a` has strictly lower RMSE than `b`.
  double win_fraction(Method a, Method b) const;
};

ErrorTable comparison_table(const std::vector<ForecastResult>& results,
                            const Eigen::MatrixXd& truth, const std::vector<std::string>& channels);

/// region,method,rmse,l2,best
void write_comparison_csv(const std::filesystem::path& path, const ErrorTable& table);

/// time,region,truth,<method>... one row per (time, channel).
void write_plot_data_csv(const std::filesystem::path& path, Eigen::Index first_time,
                         const std::vector<ForecastResult>& results, const Eigen::MatrixXd& truth,
                         const std::vector<std::string>& channels);

}  // namespace dmrom
