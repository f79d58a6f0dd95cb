// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/glm.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <limits>

#include "dmrom/error.hpp"
#include "dmrom/io.hpp"

namespace dmrom {

StimulusMatrix build_design_matrix(const std::vector<Epoch>& epochs, Eigen::Index n,
                                   const std::vector<std::string>& conditions) {
  if (n < 1) throw ValidationError("design matrix needs n >= 1");
  StimulusMatrix u;
  u.condition_names = conditions;
  u.values = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(conditions.size()));
  for (const auto& e : epochs) {
    const auto it = std::find(conditions.begin(), conditions.end(), e.condition);
    if (it == conditions.end()) {
      throw ValidationError("epoch references unknown condition '" + e.condition + "'");
    }
    if (e.start < 0 || e.start >= e.end || e.end > n) {
      throw ValidationError("epoch [" + std::to_string(e.start) + ", " +
                            std::to_string(e.end) + ") of '" + e.condition +
                            "' is outside [0, " + std::to_string(n) + ")");
    }
    const auto j = static_cast<Eigen::Index>(it - conditions.begin());
    for (Eigen::Index i = e.start; i < e.end; ++i) {
      if (u.values(i, j) != 0.0) {
        throw ValidationError("overlapping epochs for condition '" + e.condition + "'");
      }
      u.values(i, j) = 1.0;
    }
  }
  return u;
}

StimulusMatrix convolve_design(const StimulusMatrix& u, const std::vector<double>& kernel) {
  if (kernel.empty()) throw ValidationError("convolution kernel is empty");
  StimulusMatrix out = u;
  for (Eigen::Index j = 0; j < u.n_conditions(); ++j) {
    for (Eigen::Index i = 0; i < u.n_times(); ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size() && static_cast<Eigen::Index>(k) <= i; ++k) {
        acc += kernel[k] * u.values(i - static_cast<Eigen::Index>(k), j);
      }
      out.values(i, j) = acc;
    }
  }
  return out;
}

std::vector<double> load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open kernel file '" + path.string() + "'");
  std::vector<double> kernel;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      kernel.push_back(std::stod(line, &used));
    } catch (const std::exception&) {
      if (!first) {
        throw ValidationError("kernel file '" + path.string() + "': bad value '" + line + "'");
      }
    }
    first = false;
  }
  if (kernel.empty()) throw ValidationError("kernel file '" + path.string() + "' is empty");
  return kernel;
}

GlmFit fit_glm(const TimeSeriesMatrix& x, const StimulusMatrix& u) {
  x.validate();
  if (u.n_times() != x.n_times()) {
    throw ValidationError("design has " + std::to_string(u.n_times()) +
                          " rows, series has " + std::to_string(x.n_times()));
  }
  if (u.n_conditions() < 1) throw ValidationError("design matrix has no columns");
  if (!u.values.allFinite()) throw ValidationError("design matrix is not finite");
  if (x.n_times() <= u.n_conditions()) {
    throw ValidationError("need N > p for a GLM fit");
  }

  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(u.values);
  GlmFit fit;
  fit.rank = cod.rank();
  fit.dof = x.n_times() - fit.rank;
  if (fit.dof <= 0) throw ValidationError("design leaves no residual degrees of freedom");

  fit.betas = cod.solve(x.values).transpose();
  fit.residuals = x.values - u.values * fit.betas.transpose();
  fit.sigma2 = fit.residuals.colwise().squaredNorm().transpose() / static_cast<double>(fit.dof);
  return fit;
}

double two_sided_p(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

ContrastResult contrast_tstat(const GlmFit& fit, const StimulusMatrix& u,
                              const Eigen::VectorXd& c) {
  if (c.size() != u.n_conditions() || c.size() != fit.betas.cols()) {
    throw ValidationError("contrast length does not match the design");
  }
  if (!c.allFinite()) throw ValidationError("contrast is not finite");
  if (c.cwiseAbs().maxCoeff() == 0.0) throw ValidationError("contrast vector is zero");

  const Eigen::MatrixXd gram = u.values.transpose() * u.values;
  const Eigen::MatrixXd gram_pinv =
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(gram).pseudoInverse();
  const double variance_factor = c.dot(gram_pinv * c);
  if (!(variance_factor > 0.0)) throw ValidationError("contrast is not estimable");

  ContrastResult out;
  out.contrast = c;
  const auto m = fit.betas.rows();
  out.t_values.resize(m);
  out.p_values.resize(m);
  const Eigen::VectorXd effect = fit.betas * c;
  const Eigen::MatrixXd fitted = u.values * fit.betas.transpose();
  for (Eigen::Index i = 0; i < m; ++i) {
    // Residuals at rounding level of the signal count as an exact fit.
    const double rss = fit.residuals.col(i).squaredNorm();
    const double total = fitted.col(i).squaredNorm() + rss;
    const bool exact = rss <= 1e-26 * total;
    const double se2 = exact ? 0.0 : fit.sigma2(i) * variance_factor;
    double t = 0.0;
    if (se2 > 0.0) {
      t = effect(i) / std::sqrt(se2);
    } else if (effect(i) != 0.0) {
      t = std::copysign(std::numeric_limits<double>::infinity(), effect(i));
    }
    out.t_values(i) = t;
    out.p_values(i) = two_sided_p(t, static_cast<double>(fit.dof));
  }
  return out;
}

EpochConfig epoch_config_from_json(const nlohmann::json& j) {
  EpochConfig cfg;
  try {
    for (const auto& e : j.at("epochs")) {
      Epoch epoch{e.at("condition").get<std::string>(), e.at("start").get<Eigen::Index>(),
                  e.at("end").get<Eigen::Index>()};
      if (!j.contains("conditions") &&
          std::find(cfg.conditions.begin(), cfg.conditions.end(), epoch.condition) ==
              cfg.conditions.end()) {
        cfg.conditions.push_back(epoch.condition);
      }
      cfg.epochs.push_back(std::move(epoch));
    }
    if (j.contains("conditions")) cfg.conditions = j.at("conditions").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("epoch config: ") + e.what());
  }
  return cfg;
}

void write_glm_report(const std::filesystem::path& path, const TimeSeriesMatrix& x,
                      const StimulusMatrix& u, const GlmFit& fit,
                      const ContrastResult& contrast, double threshold) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalError("cannot write '" + path.string() + "'");
  out << "channel";
  for (const auto& name : u.condition_names) out << ",beta_" << name;
  out << ",t,p,pass\n";
  for (Eigen::Index i = 0; i < fit.betas.rows(); ++i) {
    out << x.channel_names[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < fit.betas.cols(); ++j) out << ',' << io::format_double(fit.betas(i, j));
    out << ',' << io::format_double(contrast.t_values(i)) << ','
        << io::format_double(contrast.p_values(i)) << ','
        << (contrast.p_values(i) < threshold ? 1 : 0) << '\n';
  }
}

}  // namespace dmrom
