// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/dmaps.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dmrom/error.hpp"
#include "dmrom/io.hpp"

namespace dmrom {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ValidationError("point dimensions differ");
  Eigen::MatrixXd d(a.rows(), b.rows());
  // Direct differences rather than the |a|^2 + |b|^2 - 2ab expansion, so the
  // diagonal of a self-distance matrix is exactly zero.
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    }
  }
  return d;
}

double auto_sigma(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw ValidationError("auto sigma needs at least 2 points");
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d2.push_back((points.row(i) - points.row(j)).squaredNorm());
  const auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  double median = *mid;
  if (d2.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(d2.begin(), mid));
  }
  if (!(median > 0.0)) throw ValidationError("auto sigma: median squared distance is zero");
  return median / 2.0;
}

AffinityMatrix gaussian_affinity(const Eigen::MatrixXd& points, std::optional<double> sigma) {
  if (points.rows() < 1) throw ValidationError("affinity needs at least one point");
  const double s = sigma ? *sigma : auto_sigma(points);
  if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("kernel scale sigma must be positive");
  const Eigen::MatrixXd d2 = squared_distances(points, points);
  if (!d2.allFinite()) throw ValidationError("non-finite pairwise distance");

  AffinityMatrix w;
  w.sigma = s;
  w.weights = (-d2.array() / (2.0 * s)).exp().matrix();
  return w;
}

DiffusionOperator diffusion_operator(const AffinityMatrix& w, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  const auto& W = w.weights;
  DiffusionOperator p;
  p.alpha = alpha;
  p.sigma = w.sigma;
  p.degrees = W.rowwise().sum();
  if (!(p.degrees.minCoeff() > 0.0)) throw NumericalError("affinity matrix has a zero row sum");

  const Eigen::VectorXd scale = p.degrees.array().pow(-alpha).matrix();
  p.normalized = scale.asDiagonal() * W * scale.asDiagonal();
  // Exact symmetry regardless of rounding in the two diagonal products.
  p.normalized = 0.5 * (p.normalized + p.normalized.transpose()).eval();
  p.row_degrees = p.normalized.rowwise().sum();
  if (!(p.row_degrees.minCoeff() > 0.0)) {
    throw NumericalError("normalized affinity matrix has a zero row sum");
  }
  p.transition = p.row_degrees.cwiseInverse().asDiagonal() * p.normalized;
  return p;
}

Eigen::MatrixXd symmetric_conjugate(const DiffusionOperator& p) {
  const Eigen::VectorXd inv_sqrt = p.row_degrees.array().rsqrt().matrix();
  Eigen::MatrixXd s = inv_sqrt.asDiagonal() * p.normalized * inv_sqrt.asDiagonal();
  return 0.5 * (s + s.transpose());
}

DiffusionEmbedding spectral_decompose(const DiffusionOperator& p, Eigen::Index k) {
  const Eigen::Index n = p.transition.rows();
  if (k < 1 || k >= n) {
    throw ValidationError("k = " + std::to_string(k) + " must satisfy 1 <= k < N = " +
                          std::to_string(n));
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric_conjugate(p));
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");

  // Eigen returns ascending order.
  DiffusionEmbedding e;
  e.sigma = p.sigma;
  e.alpha = p.alpha;
  e.degrees = p.degrees;
  e.eigenvalues.resize(k + 1);
  e.eigenvectors.resize(n, k + 1);
  const Eigen::VectorXd inv_sqrt = p.row_degrees.array().rsqrt().matrix();
  for (Eigen::Index l = 0; l <= k; ++l) {
    const Eigen::Index src = n - 1 - l;
    e.eigenvalues(l) = solver.eigenvalues()(src);
    Eigen::VectorXd psi = inv_sqrt.asDiagonal() * solver.eigenvectors().col(src);
    psi.normalize();
    Eigen::Index arg = 0;
    psi.cwiseAbs().maxCoeff(&arg);
    if (psi(arg) < 0.0) psi = -psi;
    e.eigenvectors.col(l) = psi;
  }
  return e;
}

Eigen::MatrixXd embed(const DiffusionEmbedding& e, int t) {
  if (t < 0) throw ValidationError("diffusion time t must be non-negative");
  const Eigen::Index k = e.k();
  Eigen::MatrixXd y = e.eigenvectors.rightCols(k);
  if (t == 0) return y;
  for (Eigen::Index l = 0; l < k; ++l) y.col(l) *= std::pow(e.eigenvalues(l + 1), t);
  return y;
}

void write_embedding_bundle(const std::filesystem::path& dir, const DiffusionEmbedding& e,
                            const nlohmann::json& extra_meta) {
  std::filesystem::create_directories(dir);
  io::write_csv(dir / "eigenvalues.csv", {"eigenvalue"}, e.eigenvalues);
  std::vector<std::string> header;
  for (Eigen::Index l = 0; l <= e.k(); ++l) header.push_back("psi_" + std::to_string(l));
  io::write_csv(dir / "eigenvectors.csv", header, e.eigenvectors);
  io::write_csv(dir / "degrees.csv", {"degree"}, e.degrees);
  nlohmann::json meta = extra_meta;
  meta["sigma"] = e.sigma;
  meta["alpha"] = e.alpha;
  meta["t"] = e.t;
  meta["k"] = e.k();
  meta["sign_convention"] = "max-abs-positive";
  io::write_json(dir / "meta.json", meta);
}

DiffusionEmbedding read_embedding_bundle(const std::filesystem::path& dir) {
  DiffusionEmbedding e;
  const auto meta_path = dir / "meta.json";
  const auto meta = io::read_json(meta_path);
  try {
    e.sigma = meta.at("sigma").get<double>();
    e.alpha = meta.at("alpha").get<double>();
    e.t = meta.at("t").get<int>();
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("'" + meta_path.string() + "': " + ex.what());
  }
  const auto values = io::read_csv(dir / "eigenvalues.csv");
  const auto vectors = io::read_csv(dir / "eigenvectors.csv");
  const auto degrees = io::read_csv(dir / "degrees.csv");
  if (values.values.cols() != 1) {
    throw ValidationError("'" + (dir / "eigenvalues.csv").string() + "': expected one column");
  }
  if (vectors.values.cols() != values.values.rows()) {
    throw ValidationError("'" + (dir / "eigenvectors.csv").string() +
                          "': column count does not match eigenvalues.csv");
  }
  if (degrees.values.cols() != 1 || degrees.values.rows() != vectors.values.rows()) {
    throw ValidationError("'" + (dir / "degrees.csv").string() +
                          "': expected one value per training point");
  }
  if (meta.value("k", Eigen::Index{-1}) != values.values.rows() - 1) {
    throw ValidationError("'" + meta_path.string() + "': k does not match eigenvalues.csv");
  }
  e.eigenvalues = values.values.col(0);
  e.eigenvectors = vectors.values;
  e.degrees = degrees.values.col(0);
  return e;
}

}  // namespace dmrom
