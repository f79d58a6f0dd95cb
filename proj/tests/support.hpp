// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures and independent reference computations for the tests.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "dmrom/log.hpp"

namespace testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                     double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dmrom_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Collects warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() {
    dmrom::set_warning_sink([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { dmrom::set_warning_sink(nullptr); }
  bool contains(const std::string& needle) const {
    return std::any_of(messages.begin(), messages.end(),
                       [&](const std::string& m) { return m.find(needle) != std::string::npos; });
  }
  std::vector<std::string> messages;
};

// Every regular file below `root`, relative path -> contents.
inline std::vector<std::pair<std::string, std::string>> snapshot(const std::filesystem::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    files.emplace_back(std::filesystem::relative(entry.path(), root).string(), read_text(entry.path()));
  }
  std::sort(files.begin(), files.end());
  return files;
}

// --- reference computations --------------------------------------------------

// Row-stochastic diffusion operator written out loop by loop.
inline Eigen::MatrixXd reference_transition(const Eigen::MatrixXd& x, double sigma, double alpha) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd w(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) d2 += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      w(i, j) = std::exp(-d2 / (2.0 * sigma));
    }
  std::vector<double> q(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) q[static_cast<std::size_t>(i)] += w(i, j);
  Eigen::MatrixXd wt(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      wt(i, j) = w(i, j) / (std::pow(q[static_cast<std::size_t>(i)], alpha) *
                            std::pow(q[static_cast<std::size_t>(j)], alpha));
  Eigen::MatrixXd p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) s += wt(i, j);
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = wt(i, j) / s;
  }
  return p;
}

// All roots of a monic polynomial x^n + c[n-1] x^(n-1) + ... + c[0]
// by Durand-Kerner iteration.
inline std::vector<std::complex<double>> polynomial_roots(const std::vector<double>& c) {
  const std::size_t n = c.size();
  auto eval = [&](std::complex<double> x) {
    std::complex<double> v = 1.0;
    for (std::size_t k = n; k-- > 0;) v = v * x + c[k];
    return v;
  };
  std::vector<std::complex<double>> z(n);
  const std::complex<double> seed(0.4, 0.9);
  for (std::size_t k = 0; k < n; ++k) z[k] = std::pow(seed, static_cast<double>(k));
  for (int iter = 0; iter < 2000; ++iter) {
    double change = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> denom = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != k) denom *= z[k] - z[j];
      const std::complex<double> step = eval(z[k]) / denom;
      z[k] -= step;
      change = std::max(change, std::abs(step));
    }
    if (change < 1e-15) break;
  }
  // Newton polish.
  for (auto& r : z) {
    for (int it = 0; it < 5; ++it) {
      std::complex<double> v = 1.0, dv = 0.0;
      for (std::size_t k = n; k-- > 0;) {
        dv = dv * r + v;
        v = v * r + c[k];
      }
      if (std::abs(dv) > 0.0) r -= v / dv;
    }
  }
  return z;
}

// Composite Simpson rule for the Student-t density on [0, |t|]; returns the
// two-sided tail probability.
inline double simpson_two_sided_p(double t, double dof) {
  const double a = std::abs(t);
  const double norm = std::tgamma((dof + 1.0) / 2.0) /
                      (std::sqrt(dof * std::numbers::pi) * std::tgamma(dof / 2.0));
  auto f = [&](double x) { return norm * std::pow(1.0 + x * x / dof, -(dof + 1.0) / 2.0); };
  const int n = 20000;
  const double h = a / n;
  double s = f(0.0) + f(a);
  for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return 1.0 - 2.0 * (s * h / 3.0);
}

// Uniform random points on the rectangle [0, length] x [0, width].
// nx x ny cells over [0, length] x [0, width], one point per cell, jittered
// by up to half a cell.
inline Eigen::MatrixXd strip_points(Eigen::Index nx, Eigen::Index ny, double length, double width,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);
  Eigen::MatrixXd p(nx * ny, 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < nx; ++i) {
    for (Eigen::Index j = 0; j < ny; ++j, ++k) {
      p(k, 0) = (static_cast<double>(i) + 0.5 + jitter(rng)) * length / static_cast<double>(nx);
      p(k, 1) = (static_cast<double>(j) + 0.5 + jitter(rng)) * width / static_cast<double>(ny);
    }
  }
  return p;
}

inline double abs_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  return std::abs(ca.dot(cb)) / (ca.norm() * cb.norm());
}

}  // namespace testing
