// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/parsimony.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmrom/error.hpp"

namespace dmrom {
namespace {

constexpr double kRidge = 1e-10;

double median_distance(const Eigen::MatrixXd& d2) {
  const Eigen::Index n = d2.rows();
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) d.push_back(std::sqrt(d2(i, j)));
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double m = *mid;
  if (d.size() % 2 == 0) m = 0.5 * (m + *std::max_element(d.begin(), mid));
  return m;
}

}  // namespace

Eigen::VectorXd parsimony_errors(const Eigen::MatrixXd& psi, double scale_fraction,
                                 Eigen::VectorXd* kernel_scales) {
  const Eigen::Index n = psi.rows();
  const Eigen::Index k = psi.cols();
  if (k < 1) throw ValidationError("parsimony needs at least one eigenvector");
  if (n < 3) throw ValidationError("parsimony needs at least 3 points");
  if (!(scale_fraction > 0.0)) throw ValidationError("scale_fraction must be positive");
  if (!psi.allFinite()) throw ValidationError("eigenvectors are not finite");

  Eigen::VectorXd er(k);
  er(0) = 1.0;
  Eigen::VectorXd scales = Eigen::VectorXd::Zero(k);

  // Squared distances in the predecessor space grow one coordinate at a time.
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index l = 1; l < k; ++l) {
    const Eigen::VectorXd prev = psi.col(l - 1);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) d2(i, j) += (prev(i) - prev(j)) * (prev(i) - prev(j));

    const double h = scale_fraction * median_distance(d2);
    scales(l) = h;
    const Eigen::VectorXd target = psi.col(l);
    const double denom = target.squaredNorm();
    if (!(denom > 0.0)) throw ValidationError("eigenvector " + std::to_string(l + 1) + " is zero");

    Eigen::MatrixXd weights;
    if (h > 0.0) {
      weights = (-d2.array() / (h * h)).exp().matrix();
    } else {
      weights = Eigen::MatrixXd::Ones(n, n);
    }

    // Affine design [1, psi_1..psi_{l}] at every point.
    Eigen::MatrixXd design(n, l + 1);
    design.col(0).setOnes();
    design.rightCols(l) = psi.leftCols(l);

    double sse = 0.0;
    Eigen::MatrixXd normal(l + 1, l + 1);
    Eigen::VectorXd rhs(l + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd w = weights.col(i);
      w(i) = 0.0;
      normal.noalias() = design.transpose() * w.asDiagonal() * design;
      normal.diagonal().array() += kRidge;
      rhs.noalias() = design.transpose() * w.cwiseProduct(target);
      const Eigen::VectorXd coef = normal.ldlt().solve(rhs);
      const double fit = design.row(i).dot(coef);
      const double r = target(i) - (std::isfinite(fit) ? fit : 0.0);
      sse += r * r;
    }
    er(l) = std::sqrt(sse / denom);
  }
  if (kernel_scales) *kernel_scales = scales;
  return er;
}

std::vector<Eigen::Index> select_parsimonious(const Eigen::VectorXd& er, Eigen::Index d) {
  if (d < 1 || d > er.size()) {
    throw ValidationError("d = " + std::to_string(d) + " must satisfy 1 <= d <= k = " +
                          std::to_string(er.size()));
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(er.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return er(a) > er(b); });
  std::vector<Eigen::Index> picked(order.begin(), order.begin() + d);
  std::sort(picked.begin(), picked.end());
  for (auto& p : picked) p += 1;
  return picked;
}

ParsimonyReport parsimony_report(const Eigen::MatrixXd& psi, Eigen::Index d,
                                 double scale_fraction) {
  ParsimonyReport r;
  r.scale_fraction = scale_fraction;
  r.er = parsimony_errors(psi, scale_fraction, &r.kernel_scales);
  r.selected = select_parsimonious(r.er, d);
  return r;
}

nlohmann::json parsimony_to_json(const ParsimonyReport& r) {
  return {{"er", std::vector<double>(r.er.data(), r.er.data() + r.er.size())},
          {"selected", r.selected},
          {"kernel_scales", std::vector<double>(r.kernel_scales.data(),
                                                r.kernel_scales.data() + r.kernel_scales.size())},
          {"scale_fraction", r.scale_fraction}};
}

ParsimonyReport parsimony_from_json(const nlohmann::json& j) {
  try {
    ParsimonyReport r;
    const auto er = j.at("er").get<std::vector<double>>();
    r.er = Eigen::Map<const Eigen::VectorXd>(er.data(), static_cast<Eigen::Index>(er.size()));
    r.selected = j.at("selected").get<std::vector<Eigen::Index>>();
    r.scale_fraction = j.at("scale_fraction").get<double>();
    if (j.contains("kernel_scales")) {
      const auto ks = j.at("kernel_scales").get<std::vector<double>>();
      r.kernel_scales =
          Eigen::Map<const Eigen::VectorXd>(ks.data(), static_cast<Eigen::Index>(ks.size()));
    }
    for (auto s : r.selected) {
      if (s < 1 || s > r.er.size()) throw ValidationError("selected index out of range");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("parsimony report: ") + e.what());
  }
}

}  // namespace dmrom
