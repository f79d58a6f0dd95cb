// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "dmrom/error.hpp"
#include "dmrom/ingest.hpp"
#include "dmrom/rom_koopman.hpp"
#include "support.hpp"

using namespace dmrom;

namespace {

// Random matrix rescaled to spectral radius `radius`.
Eigen::MatrixXd stable_matrix(Eigen::Index d, std::uint64_t seed, double radius = 0.95) {
  Eigen::MatrixXd a = testing::gaussian_matrix(d, d, seed);
  const double rho = Eigen::EigenSolver<Eigen::MatrixXd>(a).eigenvalues().cwiseAbs().maxCoeff();
  return a * (radius / rho);
}

Eigen::MatrixXd trajectory(const Eigen::MatrixXd& a, const Eigen::VectorXd& x0, Eigen::Index n) {
  Eigen::MatrixXd y(n, a.rows());
  Eigen::VectorXd x = x0;
  for (Eigen::Index i = 0; i < n; ++i) {
    y.row(i) = x.transpose();
    x = a * x;
  }
  return y;
}

}  // namespace

TEST_CASE("fit: exact recovery of a known stable linear map") {
  for (Eigen::Index d = 1; d <= 5; ++d) {
    const Eigen::MatrixXd a = stable_matrix(d, 10 + static_cast<std::uint64_t>(d), 0.99);
    const Eigen::MatrixXd y = trajectory(a, Eigen::VectorXd::Ones(d) + testing::gaussian_matrix(d, 1, 3), 60);
    CHECK((koopman_fit(y) - a).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("fit: a constant trajectory is a fixed point") {
  const Eigen::Vector3d v(0.5, -1.0, 2.0);
  const Eigen::MatrixXd y = v.transpose().replicate(10, 1);
  const Eigen::MatrixXd u = koopman_fit(y);
  CHECK((u * v - v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit: rotation eigenvalues sit on the unit circle") {
  const double theta = 0.7;
  Eigen::Matrix2d r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  const auto eig = koopman_eig(koopman_fit(trajectory(r, Eigen::Vector2d(1.0, 0.0), 50)));
  CHECK(std::abs(eig.values(0) - std::polar(1.0, theta)) < 1e-8);
  CHECK(std::abs(eig.values(1) - std::polar(1.0, -theta)) < 1e-8);
}

TEST_CASE("fit: input validation") {
  CHECK_THROWS_AS(koopman_fit(Eigen::MatrixXd(1, 2)), ValidationError);
  CHECK_THROWS_AS(koopman_fit(Eigen::MatrixXd::Zero(5, 2)), ValidationError);
}

TEST_CASE("eig: identity and diagonal operators") {
  const auto id = koopman_eig(Eigen::Matrix3d::Identity());
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(id.values(j) - 1.0) < 1e-14);

  const auto diag = koopman_eig(Eigen::Vector2d(0.5, 0.9).asDiagonal().toDenseMatrix());
  CHECK(std::abs(diag.values(0) - 0.9) < 1e-14);
  CHECK(std::abs(diag.values(1) - 0.5) < 1e-14);
  CHECK(std::abs(diag.vectors(1, 0) - 1.0) < 1e-14);
  CHECK(std::abs(diag.vectors(0, 0)) < 1e-14);
  CHECK(std::abs(diag.vectors(0, 1) - 1.0) < 1e-14);
}

TEST_CASE("eig: 3x3 spectrum agrees with characteristic polynomial roots") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::Matrix3d u = testing::gaussian_matrix(3, 3, 200 + seed);
    // det(xI - U) = x^3 - tr x^2 + c1 x - det
    const double tr = u.trace();
    const double c1 = u(0, 0) * u(1, 1) - u(0, 1) * u(1, 0) + u(0, 0) * u(2, 2) - u(0, 2) * u(2, 0) +
                      u(1, 1) * u(2, 2) - u(1, 2) * u(2, 1);
    const auto roots = testing::polynomial_roots({-u.determinant(), c1, -tr});
    const auto eig = koopman_eig(u);
    for (const auto& r : roots) {
      double nearest = 1e300;
      for (Eigen::Index j = 0; j < 3; ++j) nearest = std::min(nearest, std::abs(eig.values(j) - r));
      CHECK(nearest < 1e-8);
    }
    for (Eigen::Index j = 1; j < 3; ++j) CHECK(std::abs(eig.values(j)) <= std::abs(eig.values(j - 1)) + 1e-12);
    // Right eigenpairs and the dual basis.
    const Eigen::Matrix3cd uc = u.cast<std::complex<double>>();
    CHECK((uc * eig.vectors - eig.vectors * eig.values.asDiagonal()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((eig.duals.transpose() * eig.vectors - Eigen::Matrix3cd::Identity()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("eigenfunctions advance by their eigenvalue") {
  const Eigen::MatrixXd a = stable_matrix(3, 44);
  const Eigen::MatrixXd y = trajectory(a, Eigen::Vector3d(1.0, 0.2, -0.5), 30);
  const auto eig = koopman_eig(koopman_fit(y));
  const Eigen::MatrixXcd phi = eigenfunction_values(y, eig);
  for (Eigen::Index i = 0; i + 1 < 30; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(phi(i + 1, j) - eig.values(j) * phi(i, j)) < 1e-10);
}

TEST_CASE("modes: identity observables reconstruct the training data") {
  const Eigen::MatrixXd a = stable_matrix(3, 45, 0.98);
  const Eigen::MatrixXd y = trajectory(a, Eigen::Vector3d(0.3, 1.0, -0.8), 40);
  const auto m = koopman_build(y, y);
  CHECK(m.training_residual < 1e-8);
  const Eigen::MatrixXd recon = (eigenfunction_values(y, m.eig) * m.modes.transpose()).real();
  CHECK((recon - y).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("modes: a constant eigenfunction projects onto the time mean") {
  const Eigen::MatrixXd y = Eigen::MatrixXd::Ones(12, 1);
  const Eigen::MatrixXd x = testing::gaussian_matrix(12, 4, 46);
  const auto eig = koopman_eig(koopman_fit(y));
  const Eigen::MatrixXcd c = koopman_modes(x, y, eig);
  REQUIRE(c.rows() == 4);
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(std::abs(c(k, 0) - x.col(k).mean()) < 1e-12);
}

TEST_CASE("modes: linear latent systems reconstruct linear observables") {
  SynthConfig sc;
  sc.dynamics = SynthDynamics::linear_stable;
  sc.intrinsic_dim = 3;
  sc.contraction = 0.97;
  sc.n_times = 100;
  sc.ambient_dim = 3;
  const Eigen::MatrixXd latent = generate_synthetic(sc).second.latent;
  const Eigen::MatrixXd x = latent * testing::gaussian_matrix(3, 20, 47);
  const auto m = koopman_build(latent, x);
  CHECK(m.training_residual / x.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("forecast: empty horizon, frozen dynamics, linear propagation") {
  const Eigen::MatrixXd a = stable_matrix(2, 48);
  const Eigen::MatrixXd y = trajectory(a, Eigen::Vector2d(1.0, 0.5), 30);
  const Eigen::MatrixXd b = testing::gaussian_matrix(2, 5, 49);
  const Eigen::MatrixXd x = y * b;
  const auto m = koopman_build(y, x);
  const auto empty = koopman_forecast(m, y.row(29).transpose(), 0);
  CHECK(empty.reduced.rows() == 0);
  CHECK(empty.ambient.rows() == 0);

  const Eigen::MatrixXd future = trajectory(a, a * y.row(29).transpose(), 5);
  const auto f = koopman_forecast(m, y.row(29).transpose(), 5);
  CHECK((f.ambient - future * b).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((f.reduced - future).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(f.max_imaginary < 1e-8);

  // U = I: the forecast never moves off the reconstruction of the start.
  KoopmanModel frozen = m;
  frozen.operator_matrix = Eigen::Matrix2d::Identity();
  frozen.eig = koopman_eig(frozen.operator_matrix);
  frozen.modes = koopman_modes(x, y, frozen.eig);
  frozen.reduced_modes = koopman_modes(y, y, frozen.eig);
  const auto g = koopman_forecast(frozen, y.row(3).transpose(), 4);
  for (Eigen::Index s = 1; s < 4; ++s) CHECK((g.ambient.row(s) - g.ambient.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(koopman_forecast(m, Eigen::Vector3d::Zero(), 3), ValidationError);
}

TEST_CASE("build: warns about eigenvalues outside the unit circle") {
  testing::WarningCapture warnings;
  Eigen::Matrix2d grow;
  grow << 1.05, 0.0, 0.0, 0.5;
  const Eigen::MatrixXd y = trajectory(grow, Eigen::Vector2d(1.0, 1.0), 20);
  koopman_build(y, y);
  CHECK_FALSE(warnings.messages.empty());
}

TEST_CASE("model JSON round-trips") {
  const Eigen::MatrixXd a = stable_matrix(3, 50);
  const Eigen::MatrixXd y = trajectory(a, Eigen::Vector3d(1.0, -1.0, 0.5), 25);
  const auto m = koopman_build(y, y * testing::gaussian_matrix(3, 4, 51));
  const auto back = koopman_from_json(nlohmann::json::parse(koopman_to_json(m).dump()));
  CHECK(back.operator_matrix == m.operator_matrix);
  CHECK(back.eig.values == m.eig.values);
  CHECK(back.modes == m.modes);
  CHECK(back.reduced_modes == m.reduced_modes);
  const auto f1 = koopman_forecast(m, y.row(24).transpose(), 6);
  const auto f2 = koopman_forecast(back, y.row(24).transpose(), 6);
  CHECK(f1.ambient == f2.ambient);
  auto broken = koopman_to_json(m);
  broken.erase("modes");
  CHECK_THROWS_AS(koopman_from_json(broken), ValidationError);
}
