// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "json.hpp"

namespace dmrom {

struct ParsimonyReport {
  Eigen::VectorXd er;                 // er(l - 1) scores psi_l, l = 1..k
  std::vector<Eigen::Index> selected; // 1-based eigen-indices, ascending
  Eigen::VectorXd kernel_scales;      // bandwidth used for each l (0 for l = 1)
  double scale_fraction = 1.0 / 3.0;
};

/// Normalized leave-one-out local-linear residual of each column against all
/// earlier columns.
///
/// `psi` holds the nontrivial eigenvectors psi_1..psi_k in descending
/// eigenvalue order (no constant column). For column l >= 2 and each point
/// i, a Gaussian-weighted affine fit of psi_l on (psi_1..psi_{l-1}) over the
/// other points j != i predicts psi_l(i); the weights are
/// exp(-|d_ij|^2 / h^2) with h = scale_fraction * median pairwise distance
/// among the predecessor vectors. The score is
///
///     er_l = sqrt( sum_i (psi_l(i) - fit_i)^2 / sum_i psi_l(i)^2 )
///
/// and er_1 = 1 by convention. A ridge of 1e-10 on the weighted normal
/// equations keeps degenerate neighbourhoods solvable.
Eigen::VectorXd parsimony_errors(const Eigen::MatrixXd& psi, double scale_fraction,
                                 Eigen::VectorXd* kernel_scales = nullptr);

/// 1-based indices of the d largest scores in ascending order; ties go to the
/// smaller index.
std::vector<Eigen::Index> select_parsimonious(const Eigen::VectorXd& er, Eigen::Index d);

ParsimonyReport parsimony_report(const Eigen::MatrixXd& psi, Eigen::Index d,
                                 double scale_fraction);

nlohmann::json parsimony_to_json(const ParsimonyReport& r);
ParsimonyReport parsimony_from_json(const nlohmann::json& j);

}  // namespace dmrom
