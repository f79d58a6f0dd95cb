// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/rom_koopman.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dmrom/error.hpp"
#include "dmrom/io.hpp"
#include "dmrom/log.hpp"

namespace dmrom {

Eigen::MatrixXd koopman_fit(const Eigen::MatrixXd& coords, double svd_tol) {
  const Eigen::Index n = coords.rows();
  const Eigen::Index d = coords.cols();
  if (d < 1) throw ValidationError("Koopman fit needs at least one coordinate");
  if (n < d + 1) {
    throw ValidationError("Koopman fit needs n_train >= d + 1 = " + std::to_string(d + 1) +
                          ", got " + std::to_string(n));
  }
  if (!coords.allFinite()) throw ValidationError("Koopman coordinates are not finite");
  if (!(svd_tol >= 0.0)) throw ValidationError("svd tolerance must be non-negative");

  const Eigen::MatrixXd past = coords.topRows(n - 1).transpose();   // d x (n-1)
  const Eigen::MatrixXd future = coords.bottomRows(n - 1).transpose();
  if (past.cwiseAbs().maxCoeff() == 0.0) throw ValidationError("snapshot matrix is all zero");

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(past, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = svd_tol * sv(0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return future * pinv;
}

KoopmanEig koopman_eig(const Eigen::MatrixXd& operator_matrix) {
  if (operator_matrix.rows() != operator_matrix.cols() || operator_matrix.rows() == 0) {
    throw ValidationError("Koopman matrix must be square and non-empty");
  }
  if (!operator_matrix.allFinite()) throw ValidationError("Koopman matrix is not finite");
  const Eigen::EigenSolver<Eigen::MatrixXd> solver(operator_matrix, true);
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed");
  const Eigen::VectorXcd values = solver.eigenvalues();
  const Eigen::MatrixXcd vectors = solver.eigenvectors();
  const Eigen::Index d = values.size();

  // Group conjugate pairs (the real Schur form keeps them adjacent).
  struct Group {
    std::vector<Eigen::Index> members;
    double modulus;
    double real;
  };
  std::vector<Group> groups;
  for (Eigen::Index i = 0; i < d;) {
    if (values(i).imag() != 0.0 && i + 1 < d && values(i + 1) == std::conj(values(i))) {
      const Eigen::Index pos = values(i).imag() > 0.0 ? i : i + 1;
      groups.push_back({{pos, pos == i ? i + 1 : i}, std::abs(values(i)), values(i).real()});
      i += 2;
    } else {
      groups.push_back({{i}, std::abs(values(i)), values(i).real()});
      i += 1;
    }
  }
  std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    if (a.modulus != b.modulus) return a.modulus > b.modulus;
    return a.real > b.real;
  });

  KoopmanEig eig;
  eig.values.resize(d);
  eig.vectors.resize(d, d);
  Eigen::Index col = 0;
  for (const auto& g : groups) {
    for (Eigen::Index src : g.members) {
      Eigen::VectorXcd v = vectors.col(src);
      v.normalize();
      const double scale = v.cwiseAbs().maxCoeff();
      for (Eigen::Index r = 0; r < d; ++r) {
        if (std::abs(v(r)) > 1e-12 * scale) {
          v *= std::conj(v(r)) / std::abs(v(r));
          v(r) = std::abs(v(r));
          break;
        }
      }
      eig.values(col) = values(src);
      eig.vectors.col(col) = v;
      ++col;
    }
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(eig.vectors);
  if (cod.rank() < d) {
    warn("Koopman matrix is defective; eigenfunctions use a pseudo-inverse dual basis");
  }
  eig.duals = cod.pseudoInverse().transpose();
  return eig;
}

Eigen::MatrixXcd eigenfunction_values(const Eigen::MatrixXd& coords, const KoopmanEig& eig) {
  if (coords.cols() != eig.duals.rows()) {
    throw ValidationError("coordinate dimension does not match the Koopman spectrum");
  }
  return coords.cast<std::complex<double>>() * eig.duals;
}

Eigen::MatrixXcd koopman_modes(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& coords,
                               const KoopmanEig& eig) {
  if (x_train.rows() != coords.rows()) {
    throw ValidationError("ambient and reduced training data differ in length");
  }
  const Eigen::MatrixXcd phi = eigenfunction_values(coords, eig);
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(phi);
  if (cod.rank() < phi.cols()) {
    warn("eigenfunction matrix has rank " + std::to_string(cod.rank()) + " < " +
         std::to_string(phi.cols()) + "; using the minimum-norm Koopman modes");
  }
  const Eigen::MatrixXcd solution = cod.solve(x_train.cast<std::complex<double>>());  // d x M
  return solution.transpose();
}

KoopmanModel koopman_build(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& x_train,
                           double svd_tol) {
  KoopmanModel m;
  m.svd_tolerance = svd_tol;
  m.operator_matrix = koopman_fit(coords, svd_tol);
  m.eig = koopman_eig(m.operator_matrix);
  for (Eigen::Index j = 0; j < m.eig.values.size(); ++j) {
    if (std::abs(m.eig.values(j)) > 1.0 + 1e-6) {
      warn("Koopman eigenvalue " + std::to_string(j) + " has modulus " +
           std::to_string(std::abs(m.eig.values(j))) + " > 1; long forecasts may grow");
    }
  }
  m.modes = koopman_modes(x_train, coords, m.eig);
  m.reduced_modes = koopman_modes(coords, coords, m.eig);
  const Eigen::MatrixXcd phi = eigenfunction_values(coords, m.eig);
  const Eigen::MatrixXd recon = (phi * m.modes.transpose()).real();
  m.training_residual = (recon - x_train).cwiseAbs().maxCoeff();
  return m;
}

KoopmanForecast koopman_forecast(const KoopmanModel& model, const Eigen::VectorXd& init_coords,
                                 Eigen::Index h) {
  if (h < 0) throw ValidationError("horizon must be non-negative");
  const Eigen::Index d = model.dim();
  if (init_coords.size() != d) throw ValidationError("initial state has the wrong dimension");
  if (!init_coords.allFinite()) throw ValidationError("initial state is not finite");

  const Eigen::VectorXcd phi0 =
      model.eig.duals.transpose() * init_coords.cast<std::complex<double>>();
  KoopmanForecast out;
  out.reduced.resize(h, d);
  out.ambient.resize(h, model.ambient_dim());
  Eigen::VectorXcd coeff = phi0;
  for (Eigen::Index s = 0; s < h; ++s) {
    // w^s computed by repeated multiplication, matching h single steps.
    coeff = coeff.cwiseProduct(model.eig.values);
    const Eigen::VectorXcd amb = model.modes * coeff;
    const Eigen::VectorXcd red = model.reduced_modes * coeff;
    out.max_imaginary = std::max({out.max_imaginary, amb.imag().cwiseAbs().maxCoeff(),
                                  red.imag().cwiseAbs().maxCoeff()});
    out.ambient.row(s) = amb.real().transpose();
    out.reduced.row(s) = red.real().transpose();
    if (!out.ambient.row(s).allFinite() || !out.reduced.row(s).allFinite()) {
      throw DivergenceError(static_cast<std::size_t>(s + 1));
    }
  }
  return out;
}

namespace {

nlohmann::json complex_matrix_to_json(const Eigen::MatrixXcd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXcd complex_matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ValidationError(what + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& z = row[static_cast<std::size_t>(c)];
      m(r, c) = {z.at(0).get<double>(), z.at(1).get<double>()};
    }
  }
  return m;
}

}  // namespace

nlohmann::json koopman_to_json(const KoopmanModel& m) {
  auto values = nlohmann::json::array();
  for (Eigen::Index j = 0; j < m.eig.values.size(); ++j)
    values.push_back({m.eig.values(j).real(), m.eig.values(j).imag()});
  return {{"U_hat", io::matrix_to_json(m.operator_matrix)},
          {"eigenvalues", values},
          {"eigenvectors", complex_matrix_to_json(m.eig.vectors)},
          {"dual_eigenvectors", complex_matrix_to_json(m.eig.duals)},
          {"modes", complex_matrix_to_json(m.modes)},
          {"reduced_modes", complex_matrix_to_json(m.reduced_modes)},
          {"svd_tolerance", m.svd_tolerance},
          {"training_residual", m.training_residual}};
}

KoopmanModel koopman_from_json(const nlohmann::json& j) {
  try {
    KoopmanModel m;
    m.operator_matrix = io::matrix_from_json(j.at("U_hat"), "U_hat");
    const auto& values = j.at("eigenvalues");
    m.eig.values.resize(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
      m.eig.values(static_cast<Eigen::Index>(i)) = {values[i].at(0).get<double>(),
                                                   values[i].at(1).get<double>()};
    m.eig.vectors = complex_matrix_from_json(j.at("eigenvectors"), "eigenvectors");
    m.eig.duals = complex_matrix_from_json(j.at("dual_eigenvectors"), "dual_eigenvectors");
    m.modes = complex_matrix_from_json(j.at("modes"), "modes");
    m.reduced_modes = complex_matrix_from_json(j.at("reduced_modes"), "reduced_modes");
    m.svd_tolerance = j.at("svd_tolerance").get<double>();
    m.training_residual = j.value("training_residual", 0.0);
    const Eigen::Index d = m.operator_matrix.rows();
    if (m.operator_matrix.cols() != d || m.eig.values.size() != d || m.eig.vectors.rows() != d ||
        m.eig.vectors.cols() != d || m.eig.duals.rows() != d || m.eig.duals.cols() != d ||
        m.modes.cols() != d || m.reduced_modes.rows() != d ||
        m.reduced_modes.cols() != d) {
      throw ValidationError("Koopman model dimensions are inconsistent");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("Koopman model: ") + e.what());
  }
}

}  // namespace dmrom
