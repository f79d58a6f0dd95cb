// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/lifting.hpp"

#include <cmath>

#include "dmrom/error.hpp"
#include "dmrom/io.hpp"
#include "dmrom/log.hpp"

namespace dmrom {
namespace {

constexpr double kSupportFloor = 1e-12;

}  // namespace

Eigen::MatrixXd nystrom_restrict(const DiffusionEmbedding& e, const Eigen::MatrixXd& x_train,
                                 const Eigen::MatrixXd& x_new,
                                 const std::vector<Eigen::Index>& indices) {
  const Eigen::Index n_train = x_train.rows();
  if (e.eigenvectors.rows() != n_train || e.degrees.size() != n_train) {
    throw ValidationError("embedding was not built from these training points");
  }
  if (x_new.cols() != x_train.cols()) throw ValidationError("new points have the wrong dimension");
  if (!x_new.allFinite()) throw ValidationError("new points are not finite");
  for (auto l : indices) {
    if (l < 1 || l > e.k()) throw ValidationError("eigen-index " + std::to_string(l) + " out of range");
    if (std::abs(e.eigenvalues(l)) < 1e-12) {
      throw NumericalError("eigenvalue of psi_" + std::to_string(l) +
                           " is too small for a Nystrom extension");
    }
  }

  const Eigen::MatrixXd d2 = squared_distances(x_new, x_train);
  const Eigen::MatrixXd w = (-d2.array() / (2.0 * e.sigma)).exp().matrix();
  const Eigen::VectorXd train_scale = e.degrees.array().pow(-e.alpha).matrix();

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x_new.rows(), static_cast<Eigen::Index>(indices.size()));
  std::size_t outside = 0;
  for (Eigen::Index i = 0; i < x_new.rows(); ++i) {
    const Eigen::VectorXd row = w.row(i).transpose();
    if (row.maxCoeff() < kSupportFloor) {
      ++outside;
      continue;
    }
    const double q = row.sum();
    Eigen::VectorXd normalized = std::pow(q, -e.alpha) * row.cwiseProduct(train_scale);
    normalized /= normalized.sum();
    for (std::size_t c = 0; c < indices.size(); ++c) {
      const Eigen::Index l = indices[c];
      const double lambda = e.eigenvalues(l);
      const double psi_hat = normalized.dot(e.eigenvectors.col(l)) / lambda;
      out(i, static_cast<Eigen::Index>(c)) = (e.t == 0 ? 1.0 : std::pow(lambda, e.t)) * psi_hat;
    }
  }
  if (outside) {
    warn(std::to_string(outside) + " point(s) out of support of the training kernel; "
         "their diffusion coordinates are set to zero");
  }
  return out;
}

Eigen::VectorXd nystrom_restrict(const DiffusionEmbedding& e, const Eigen::MatrixXd& x_train,
                                 const Eigen::VectorXd& x_new,
                                 const std::vector<Eigen::Index>& indices) {
  return nystrom_restrict(e, x_train, Eigen::MatrixXd(x_new.transpose()), indices).row(0).transpose();
}

GhLiftModel gh_fit(const Eigen::MatrixXd& y_train, const Eigen::MatrixXd& x_train,
                   std::optional<double> sigma, double eig_floor) {
  if (y_train.rows() < 2) throw ValidationError("geometric harmonics need at least 2 points");
  if (y_train.rows() != x_train.rows()) {
    throw ValidationError("reduced and ambient training sets differ in length");
  }
  if (!y_train.allFinite() || !x_train.allFinite()) throw ValidationError("training data not finite");
  if (!(eig_floor >= 0.0)) throw ValidationError("eig_floor must be non-negative");

  GhLiftModel m;
  m.y_train = y_train;
  m.x_train = x_train;
  m.eig_floor = eig_floor;
  m.sigma = sigma ? *sigma : auto_sigma(y_train);
  if (!(m.sigma > 0.0)) throw ValidationError("geometric harmonics sigma must be positive");

  const Eigen::MatrixXd k = (-squared_distances(y_train, y_train).array() / (2.0 * m.sigma)).exp().matrix();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k);
  if (solver.info() != Eigen::Success) throw NumericalError("kernel eigensolver failed");

  const Eigen::Index n = k.rows();
  const double top = solver.eigenvalues()(n - 1);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const double lambda = solver.eigenvalues()(i);
    if (lambda > 0.0 && lambda >= eig_floor * top) keep.push_back(i);
  }
  if (keep.empty()) throw NumericalError("no geometric harmonics above the eigenvalue floor");

  const auto r = static_cast<Eigen::Index>(keep.size());
  m.eigenvalues.resize(r);
  m.eigenvectors.resize(n, r);
  for (Eigen::Index c = 0; c < r; ++c) {
    m.eigenvalues(c) = solver.eigenvalues()(keep[static_cast<std::size_t>(c)]);
    m.eigenvectors.col(c) = solver.eigenvectors().col(keep[static_cast<std::size_t>(c)]);
  }
  m.coefficients = m.eigenvalues.cwiseInverse().asDiagonal() * (m.eigenvectors.transpose() * x_train);
  return m;
}

Eigen::MatrixXd gh_lift(const GhLiftModel& model, const Eigen::MatrixXd& y_new) {
  if (y_new.rows() == 0) return Eigen::MatrixXd(0, model.x_train.cols());
  if (y_new.cols() != model.y_train.cols()) throw ValidationError("reduced points have the wrong dimension");
  if (!y_new.allFinite()) throw ValidationError("reduced points are not finite");
  const Eigen::MatrixXd k =
      (-squared_distances(y_new, model.y_train).array() / (2.0 * model.sigma)).exp().matrix();
  std::size_t outside = 0;
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    if (k.row(i).maxCoeff() < kSupportFloor) ++outside;
  if (outside) {
    warn(std::to_string(outside) + " reduced point(s) out of the lifting kernel's support");
  }
  return k * (model.eigenvectors * model.coefficients);
}

void write_gh_bundle(const std::filesystem::path& dir, const GhLiftModel& model,
                     const nlohmann::json& extra_meta) {
  std::filesystem::create_directories(dir);
  io::write_csv(dir / "eigenvalues.csv", {"eigenvalue"}, model.eigenvalues);
  std::vector<std::string> header;
  for (Eigen::Index l = 0; l < model.retained(); ++l) header.push_back("gh_" + std::to_string(l));
  io::write_csv(dir / "eigenvectors.csv", header, model.eigenvectors);
  std::vector<std::string> yh;
  for (Eigen::Index l = 0; l < model.y_train.cols(); ++l) yh.push_back("y_" + std::to_string(l + 1));
  io::write_csv(dir / "y_train.csv", yh, model.y_train);
  std::vector<std::string> xh;
  for (Eigen::Index m = 0; m < model.x_train.cols(); ++m) xh.push_back("x_" + std::to_string(m));
  io::write_csv(dir / "x_train.csv", xh, model.x_train);
  nlohmann::json meta = extra_meta;
  meta["space"] = "reduced";
  meta["sigma"] = model.sigma;
  meta["eig_floor"] = model.eig_floor;
  meta["d_gh"] = model.retained();
  io::write_json(dir / "meta.json", meta);
}

GhLiftModel read_gh_bundle(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  const auto meta = io::read_json(meta_path);
  GhLiftModel m;
  try {
    if (meta.at("space").get<std::string>() != "reduced") {
      throw ValidationError("'" + meta_path.string() + "': expected space \"reduced\"");
    }
    m.sigma = meta.at("sigma").get<double>();
    m.eig_floor = meta.at("eig_floor").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + meta_path.string() + "': " + e.what());
  }
  m.eigenvalues = io::read_csv(dir / "eigenvalues.csv").values.col(0);
  m.eigenvectors = io::read_csv(dir / "eigenvectors.csv").values;
  m.y_train = io::read_csv(dir / "y_train.csv").values;
  m.x_train = io::read_csv(dir / "x_train.csv").values;
  if (m.eigenvectors.cols() != m.eigenvalues.size() || m.eigenvectors.rows() != m.y_train.rows() ||
      m.x_train.rows() != m.y_train.rows()) {
    throw ValidationError("'" + dir.string() + "': geometric harmonics bundle is inconsistent");
  }
  if (!(m.eigenvalues.size() > 0 && m.eigenvalues.minCoeff() > 0.0)) {
    throw ValidationError("'" + (dir / "eigenvalues.csv").string() + "': eigenvalues must be positive");
  }
  m.coefficients = m.eigenvalues.cwiseInverse().asDiagonal() * (m.eigenvectors.transpose() * m.x_train);
  return m;
}

}  // namespace dmrom
