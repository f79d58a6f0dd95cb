// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <vector>

#include "dmrom/dmaps.hpp"

namespace dmrom {

/// Out-of-sample diffusion coordinates of new ambient points.
///
/// The kernel row of each new point against the training set goes through
/// the same alpha normalization as the training operator, so a training
/// point maps to its own row of P and reproduces its coordinates. Returns
/// lambda_l^t * psi_hat_l for the requested 1-based eigen-indices. Points
/// whose largest kernel weight is below 1e-12 are outside the support: they
/// get zero coordinates and a warning.
Eigen::MatrixXd nystrom_restrict(const DiffusionEmbedding& e, const Eigen::MatrixXd& x_train,
                                 const Eigen::MatrixXd& x_new,
                                 const std::vector<Eigen::Index>& indices);

Eigen::VectorXd nystrom_restrict(const DiffusionEmbedding& e, const Eigen::MatrixXd& x_train,
                                 const Eigen::VectorXd& x_new,
                                 const std::vector<Eigen::Index>& indices);

/// Kernel expansion on the reduced space used to map reduced points back to
/// ambient values (geometric harmonics).
struct GhLiftModel {
  Eigen::MatrixXd y_train;       // N x d
  Eigen::MatrixXd x_train;       // N x M
  double sigma = 0.0;
  double eig_floor = 1e-8;
  Eigen::VectorXd eigenvalues;   // retained, descending, all positive
  Eigen::MatrixXd eigenvectors;  // N x d_gh, orthonormal columns
  Eigen::MatrixXd coefficients;  // d_gh x M, Lambda^-1 Psi^T f for each channel

  Eigen::Index retained() const { return eigenvalues.size(); }
};

GhLiftModel gh_fit(const Eigen::MatrixXd& y_train, const Eigen::MatrixXd& x_train,
                   std::optional<double> sigma = std::nullopt, double eig_floor = 1e-8);

/// K(y_new, y_train) Psi Lambda^-1 Psi^T X for all channels at once.
Eigen::MatrixXd gh_lift(const GhLiftModel& model, const Eigen::MatrixXd& y_new);

void write_gh_bundle(const std::filesystem::path& dir, const GhLiftModel& model,
                     const nlohmann::json& extra_meta = nlohmann::json::object());
GhLiftModel read_gh_bundle(const std::filesystem::path& dir);

}  // namespace dmrom
