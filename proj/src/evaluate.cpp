// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dmrom/error.hpp"
#include "dmrom/io.hpp"

namespace dmrom {

std::string to_string(Method m) {
  switch (m) {
    case Method::fnn_gh: return "fnn_gh";
    case Method::koopman: return "koopman";
    case Method::nrw: return "nrw";
  }
  return "unknown";
}

NrwMode parse_nrw_mode(const std::string& name) {
  if (name == "reduced_then_lift") return NrwMode::reduced_then_lift;
  if (name == "ambient") return NrwMode::ambient;
  throw ValidationError("unknown NRW mode '" + name + "'");
}

std::string to_string(NrwMode m) {
  return m == NrwMode::ambient ? "ambient" : "reduced_then_lift";
}

ForecastResult nrw_forecast(const Eigen::VectorXd& last_train, const Eigen::MatrixXd& test_truth,
                            NrwMode mode, const GhLiftModel* lift) {
  if (last_train.size() != test_truth.cols()) {
    throw ValidationError("last training value and test series differ in dimension");
  }
  const Eigen::Index h = test_truth.rows();
  Eigen::MatrixXd path(h, test_truth.cols());
  if (h > 0) {
    path.row(0) = last_train.transpose();
    path.bottomRows(h - 1) = test_truth.topRows(h - 1);
  }
  ForecastResult r;
  r.method = Method::nrw;
  if (mode == NrwMode::ambient) {
    r.ambient = std::move(path);
    return r;
  }
  if (!lift) throw ValidationError("reduced_then_lift NRW needs a lifting model");
  r.ambient = gh_lift(*lift, path);
  r.reduced = std::move(path);
  return r;
}

ErrorRows error_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw ValidationError("prediction is " + std::to_string(pred.rows()) + "x" +
                          std::to_string(pred.cols()) + ", truth is " +
                          std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
  if (pred.rows() < 1) throw ValidationError("error metrics need at least one time step");
  const Eigen::VectorXd sse = (pred - truth).colwise().squaredNorm().transpose();
  const auto h = static_cast<double>(pred.rows());
  return {(sse / h).cwiseSqrt(), sse.cwiseSqrt()};
}

double ErrorTable::win_fraction(Method a, Method b) const {
  const auto ia = std::find(methods.begin(), methods.end(), a) - methods.begin();
  const auto ib = std::find(methods.begin(), methods.end(), b) - methods.begin();
  if (ia >= static_cast<std::ptrdiff_t>(methods.size()) ||
      ib >= static_cast<std::ptrdiff_t>(methods.size())) {
    throw ValidationError("method not present in the table");
  }
  Eigen::Index wins = 0;
  for (Eigen::Index m = 0; m < rmse.rows(); ++m)
    if (rmse(m, ia) < rmse(m, ib)) ++wins;
  return rmse.rows() ? static_cast<double>(wins) / static_cast<double>(rmse.rows()) : 0.0;
}

ErrorTable comparison_table(const std::vector<ForecastResult>& results,
                            const Eigen::MatrixXd& truth, const std::vector<std::string>& channels) {
  if (results.empty()) throw ValidationError("nothing to compare");
  if (static_cast<Eigen::Index>(channels.size()) != truth.cols()) {
    throw ValidationError("channel names do not match the truth matrix");
  }
  ErrorTable t;
  t.channels = channels;
  t.rmse.resize(truth.cols(), static_cast<Eigen::Index>(results.size()));
  t.l2.resize(truth.cols(), static_cast<Eigen::Index>(results.size()));
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto rows = error_metrics(results[k].ambient, truth);
    t.methods.push_back(results[k].method);
    t.rmse.col(static_cast<Eigen::Index>(k)) = rows.rmse;
    t.l2.col(static_cast<Eigen::Index>(k)) = rows.l2;
  }
  t.best.resize(t.rmse.rows(), t.rmse.cols());
  for (Eigen::Index m = 0; m < t.rmse.rows(); ++m) {
    const double lo = t.rmse.row(m).minCoeff();
    for (Eigen::Index k = 0; k < t.rmse.cols(); ++k) t.best(m, k) = t.rmse(m, k) == lo;
  }
  return t;
}

void write_comparison_csv(const std::filesystem::path& path, const ErrorTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalError("cannot write '" + path.string() + "'");
  out << "region,method,rmse,l2,best\n";
  for (Eigen::Index m = 0; m < table.rmse.rows(); ++m) {
    for (Eigen::Index k = 0; k < table.rmse.cols(); ++k) {
      out << table.channels[static_cast<std::size_t>(m)] << ','
          << to_string(table.methods[static_cast<std::size_t>(k)]) << ','
          << io::format_double(table.rmse(m, k)) << ',' << io::format_double(table.l2(m, k))
          << ',' << (table.best(m, k) ? 1 : 0) << '\n';
    }
  }
}

void write_plot_data_csv(const std::filesystem::path& path, Eigen::Index first_time,
                         const std::vector<ForecastResult>& results, const Eigen::MatrixXd& truth,
                         const std::vector<std::string>& channels) {
  for (const auto& r : results) {
    if (r.ambient.rows() != truth.rows() || r.ambient.cols() != truth.cols()) {
      throw ValidationError("forecast shapes differ from the truth");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalError("cannot write '" + path.string() + "'");
  out << "time,region,truth";
  for (const auto& r : results) out << ',' << to_string(r.method);
  out << '\n';
  for (Eigen::Index i = 0; i < truth.rows(); ++i) {
    for (Eigen::Index m = 0; m < truth.cols(); ++m) {
      out << first_time + i << ',' << channels[static_cast<std::size_t>(m)] << ','
          << io::format_double(truth(i, m));
      for (const auto& r : results) out << ',' << io::format_double(r.ambient(i, m));
      out << '\n';
    }
  }
}

}  // namespace dmrom
