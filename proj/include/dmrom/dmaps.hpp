// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>

#include "json.hpp"

namespace dmrom {

/// Symmetric Gaussian affinities w_ij = exp(-|x_i - x_j|^2 / (2 sigma)).
/// Note sigma divides the squared distance directly; it is not squared.
struct AffinityMatrix {
  Eigen::MatrixXd weights;
  double sigma = 0.0;
};

/// Row-stochastic P = Kt^-1 Wt with Wt = K^-a W K^-a.
struct DiffusionOperator {
  Eigen::MatrixXd transition;       // P
  Eigen::MatrixXd normalized;       // Wt, symmetric
  Eigen::VectorXd degrees;          // diag(K): row sums of W
  Eigen::VectorXd row_degrees;      // diag(Kt): row sums of Wt
  double alpha = 1.0;
  double sigma = 0.0;
};

/// Leading right eigenpairs of P, eigenvalue 1 first.
///
/// Eigenvectors have unit Euclidean norm and the entry of largest magnitude
/// positive (first such index on ties). Column 0 is the trivial constant
/// vector.
struct DiffusionEmbedding {
  Eigen::VectorXd eigenvalues;   // k+1, descending
  Eigen::MatrixXd eigenvectors;  // N x (k+1)
  Eigen::VectorXd degrees;       // diag(K) of the training kernel, for extension
  double sigma = 0.0;
  double alpha = 1.0;
  int t = 0;

  Eigen::Index k() const { return eigenvalues.size() - 1; }
};

/// Pairwise squared Euclidean distances between the rows of `a` and `b`.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Median over i < j of the squared pairwise distances, halved.
double auto_sigma(const Eigen::MatrixXd& points);

/// `sigma` unset selects auto_sigma.
AffinityMatrix gaussian_affinity(const Eigen::MatrixXd& points,
                                 std::optional<double> sigma = std::nullopt);

DiffusionOperator diffusion_operator(const AffinityMatrix& w, double alpha);

/// Symmetric conjugate Kt^-1/2 Wt Kt^-1/2 of P.
Eigen::MatrixXd symmetric_conjugate(const DiffusionOperator& p);

DiffusionEmbedding spectral_decompose(const DiffusionOperator& p, Eigen::Index k);

/// N x k matrix of lambda_l^t psi_l for l = 1..k.
Eigen::MatrixXd embed(const DiffusionEmbedding& e, int t);

/// Writes eigenvalues.csv, eigenvectors.csv, degrees.csv and meta.json.
void write_embedding_bundle(const std::filesystem::path& dir, const DiffusionEmbedding& e,
                            const nlohmann::json& extra_meta = nlohmann::json::object());
DiffusionEmbedding read_embedding_bundle(const std::filesystem::path& dir);

}  // namespace dmrom
