// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <complex>

#include "json.hpp"

namespace dmrom {

/// Eigenpairs of the one-step operator U (U * vectors = vectors * diag(values)).
///
/// `duals` is the inverse transpose of `vectors`; its columns are the left
/// eigenvectors of U, so phi_j(y) = y . duals_j satisfies
/// phi_j(U y) = values_j * phi_j(y). These are the Koopman eigenfunctions
/// evaluated on the coordinates.
struct KoopmanEig {
  Eigen::VectorXcd values;   // descending modulus, conjugate pairs adjacent
  Eigen::MatrixXcd vectors;  // columns: unit norm, first nonzero entry real positive
  Eigen::MatrixXcd duals;
};

struct KoopmanModel {
  Eigen::MatrixXd operator_matrix;  // d x d, advances a coordinate column vector
  KoopmanEig eig;
  Eigen::MatrixXcd modes;          // M x d, column j is the ambient mode c_j
  Eigen::MatrixXcd reduced_modes;  // d x d, modes of the coordinates themselves
  double svd_tolerance = 1e-10;
  double training_residual = 0.0;  // max |X - Re(reconstruction)| on training data

  Eigen::Index dim() const { return operator_matrix.rows(); }
  Eigen::Index ambient_dim() const { return modes.rows(); }
};

/// Least-squares one-step operator U = Y+ pinv(Y-) from the n x d trajectory
/// `coords`, where Y- / Y+ hold rows 0..n-2 / 1..n-1 as columns. The
/// pseudo-inverse drops singular values below svd_tol times the largest.
Eigen::MatrixXd koopman_fit(const Eigen::MatrixXd& coords, double svd_tol = 1e-10);

KoopmanEig koopman_eig(const Eigen::MatrixXd& operator_matrix);

/// Eigenfunction values at each row of `coords`: coords * duals (n x d).
Eigen::MatrixXcd eigenfunction_values(const Eigen::MatrixXd& coords, const KoopmanEig& eig);

/// Modes C (M x d) solving x_i ~ sum_j c_j phi_j(i) in the least-squares
/// sense over all training rows. Minimum-norm solution (with a warning) when
/// the eigenfunction matrix is rank deficient.
Eigen::MatrixXcd koopman_modes(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& coords,
                               const KoopmanEig& eig);

/// Operator, spectrum, ambient modes fitted against `x_train` and reduced
/// modes fitted against `coords`. Warns about eigenvalues outside the unit
/// circle.
KoopmanModel koopman_build(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& x_train,
                           double svd_tol = 1e-10);

struct KoopmanForecast {
  Eigen::MatrixXd reduced;  // h x d
  Eigen::MatrixXd ambient;  // h x M
  double max_imaginary = 0.0;  // largest |Im| discarded
};

/// Step s (1..h) is Re(sum_j w_j^s c_j phi_j(init)).
KoopmanForecast koopman_forecast(const KoopmanModel& model, const Eigen::VectorXd& init_coords,
                                 Eigen::Index h);

nlohmann::json koopman_to_json(const KoopmanModel& m);
KoopmanModel koopman_from_json(const nlohmann::json& j);

}  // namespace dmrom
