// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dmrom/error.hpp"
#include "dmrom/io.hpp"

namespace dmrom {

void TimeSeriesMatrix::validate() const {
  if (values.rows() < 2) {
    throw ValidationError("time series needs at least 2 time points, got " +
                          std::to_string(values.rows()));
  }
  if (values.cols() < 1) throw ValidationError("time series has no channels");
  if (static_cast<Eigen::Index>(channel_names.size()) != values.cols()) {
    throw ValidationError("channel name count does not match column count");
  }
  if (!values.allFinite()) throw ValidationError("time series contains non-finite values");
}

TimeSeriesMatrix load_timeseries(const std::filesystem::path& path, TimeSeriesFormat) {
  auto table = io::read_csv(path);
  TimeSeriesMatrix x{std::move(table.values), std::move(table.header), 1.0};
  if (x.values.rows() < 2) {
    throw ValidationError("'" + path.string() + "': need at least 2 data rows, got " +
                          std::to_string(x.values.rows()));
  }
  x.validate();
  return x;
}

void write_timeseries(const std::filesystem::path& path, const TimeSeriesMatrix& x) {
  io::write_csv(path, x.channel_names, x.values);
}

namespace {

struct LineFit {
  double intercept;
  double slope;
};

LineFit fit_line(const Eigen::VectorXd& y) {
  const auto n = static_cast<double>(y.size());
  const double t_mean = (n - 1.0) / 2.0;
  const double y_mean = y.mean();
  double sxy = 0.0;
  double sxx = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double dt = static_cast<double>(i) - t_mean;
    sxy += dt * (y(i) - y_mean);
    sxx += dt * dt;
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return {y_mean - slope * t_mean, slope};
}

Eigen::Index resolve_fit_rows(const TimeSeriesMatrix& x, std::optional<Eigen::Index> fit_rows) {
  const Eigen::Index n = fit_rows.value_or(x.n_times());
  if (n < 2 || n > x.n_times()) {
    throw ValidationError("standardization rows " + std::to_string(n) +
                          " out of range [2, " + std::to_string(x.n_times()) + "]");
  }
  return n;
}

// Relative floor on the residual spread below which a column counts as dead.
double dead_threshold(const Eigen::VectorXd& column) {
  return 1e-12 * std::max(1.0, column.cwiseAbs().maxCoeff());
}

}  // namespace

TimeSeriesMatrix detrend_standardize(const TimeSeriesMatrix& x,
                                     std::optional<Eigen::Index> fit_rows) {
  x.validate();
  const Eigen::Index n_fit = resolve_fit_rows(x, fit_rows);
  TimeSeriesMatrix out = x;
  for (Eigen::Index c = 0; c < x.n_channels(); ++c) {
    const Eigen::VectorXd head = x.values.col(c).head(n_fit);
    const LineFit line = fit_line(head);
    Eigen::VectorXd detrended(x.n_times());
    for (Eigen::Index i = 0; i < x.n_times(); ++i) {
      detrended(i) = x.values(i, c) - (line.intercept + line.slope * static_cast<double>(i));
    }
    const Eigen::VectorXd fitted = detrended.head(n_fit);
    const double mean = fitted.mean();
    const double sd = std::sqrt((fitted.array() - mean).square().sum() /
                                static_cast<double>(n_fit - 1));
    if (!(sd > dead_threshold(x.values.col(c)))) {
      throw ConstantChannelError(static_cast<std::size_t>(c),
                                 x.channel_names[static_cast<std::size_t>(c)]);
    }
    // The OLS residual has zero mean already; subtracting it again removes
    // rounding drift so the post-condition holds tightly.
    out.values.col(c) = (detrended.array() - mean) / sd;
  }
  return out;
}

std::vector<std::size_t> dead_channels(const TimeSeriesMatrix& x,
                                       std::optional<Eigen::Index> fit_rows) {
  x.validate();
  const Eigen::Index n_fit = resolve_fit_rows(x, fit_rows);
  std::vector<std::size_t> dead;
  for (Eigen::Index c = 0; c < x.n_channels(); ++c) {
    const Eigen::VectorXd head = x.values.col(c).head(n_fit);
    const LineFit line = fit_line(head);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n_fit; ++i) {
      const double r = head(i) - (line.intercept + line.slope * static_cast<double>(i));
      ss += r * r;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n_fit - 1));
    if (!(sd > dead_threshold(x.values.col(c)))) dead.push_back(static_cast<std::size_t>(c));
  }
  return dead;
}

TimeSeriesMatrix drop_channels(const TimeSeriesMatrix& x,
                               const std::vector<std::size_t>& channels) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < x.n_channels(); ++c) {
    if (std::find(channels.begin(), channels.end(), static_cast<std::size_t>(c)) ==
        channels.end()) {
      keep.push_back(c);
    }
  }
  TimeSeriesMatrix out;
  out.dt = x.dt;
  out.values.resize(x.n_times(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.values.col(static_cast<Eigen::Index>(k)) = x.values.col(keep[k]);
    out.channel_names.push_back(x.channel_names[static_cast<std::size_t>(keep[k])]);
  }
  return out;
}

std::pair<TimeSeriesMatrix, TimeSeriesMatrix> split_train_test(const TimeSeriesMatrix& x,
                                                                const SplitSpec& spec) {
  if (spec.n_train <= 1 || spec.n_train >= x.n_times()) {
    throw ValidationError("n_train = " + std::to_string(spec.n_train) +
                          " must satisfy 1 < n_train < N = " + std::to_string(x.n_times()));
  }
  TimeSeriesMatrix train{x.values.topRows(spec.n_train), x.channel_names, x.dt};
  TimeSeriesMatrix test{x.values.bottomRows(x.n_times() - spec.n_train), x.channel_names,
                        x.dt};
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd SynthTruth::embed(const Eigen::MatrixXd& latent_points) const {
  Eigen::MatrixXd arg = latent_points * frequencies;
  arg.rowwise() += phases.transpose();
  return arg.array().cos().matrix();
}

namespace {

Eigen::MatrixXd simulate_latent(const SynthConfig& cfg, double theta0) {
  const int q = cfg.intrinsic_dim;
  Eigen::MatrixXd z(cfg.n_times, q);
  const double c = std::cos(cfg.angular_step);
  const double s = std::sin(cfg.angular_step);

  if (cfg.dynamics == SynthDynamics::limit_cycle) {
    // Discrete Hopf normal form: radius relaxes to 1, phase advances uniformly.
    constexpr double relax = 0.1;
    double r = cfg.initial_radius;
    double theta = theta0;
    double extra = cfg.initial_offset;
    for (Eigen::Index i = 0; i < cfg.n_times; ++i) {
      z(i, 0) = r * std::cos(theta);
      z(i, 1) = r * std::sin(theta);
      if (q == 3) z(i, 2) = extra;
      r = r + relax * r * (1.0 - r * r);
      theta += cfg.angular_step;
      extra *= cfg.contraction;
    }
    return z;
  }

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(q, q);
  a(0, 0) = cfg.contraction * c;
  a(0, 1) = -cfg.contraction * s;
  a(1, 0) = cfg.contraction * s;
  a(1, 1) = cfg.contraction * c;
  Eigen::VectorXd state(q);
  state(0) = cfg.initial_radius * std::cos(theta0);
  state(1) = cfg.initial_radius * std::sin(theta0);
  if (q == 3) {
    a(2, 2) = cfg.contraction * cfg.contraction;
    state(2) = cfg.initial_offset;
  }
  for (Eigen::Index i = 0; i < cfg.n_times; ++i) {
    z.row(i) = state.transpose();
    state = a * state;
  }
  return z;
}

}  // namespace

std::pair<TimeSeriesMatrix, SynthTruth> generate_synthetic(const SynthConfig& config) {
  if (config.intrinsic_dim != 2 && config.intrinsic_dim != 3) {
    throw ValidationError("intrinsic dimension must be 2 or 3");
  }
  if (config.ambient_dim < config.intrinsic_dim) {
    throw ValidationError("ambient dimension " + std::to_string(config.ambient_dim) +
                          " is smaller than intrinsic dimension " +
                          std::to_string(config.intrinsic_dim));
  }
  if (config.n_times < 2) throw ValidationError("need at least 2 time points");
  if (!(config.noise >= 0.0)) throw ValidationError("noise level must be non-negative");
  if (!(config.feature_scale > 0.0)) throw ValidationError("feature scale must be positive");
  if (config.dynamics == SynthDynamics::linear_stable &&
      !(config.contraction > 0.0 && config.contraction < 1.0)) {
    throw ValidationError("linear_stable needs contraction in (0, 1)");
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthTruth truth;
  truth.config = config;
  const double theta0 = angle(rng);
  truth.frequencies.resize(config.intrinsic_dim, config.ambient_dim);
  for (Eigen::Index m = 0; m < config.ambient_dim; ++m)
    for (Eigen::Index j = 0; j < config.intrinsic_dim; ++j)
      truth.frequencies(j, m) = config.feature_scale * gauss(rng);
  truth.phases.resize(config.ambient_dim);
  for (Eigen::Index m = 0; m < config.ambient_dim; ++m) truth.phases(m) = angle(rng);
  truth.latent = simulate_latent(config, theta0);

  TimeSeriesMatrix x;
  x.values = truth.embed(truth.latent);
  if (config.noise > 0.0) {
    for (Eigen::Index i = 0; i < x.values.rows(); ++i)
      for (Eigen::Index m = 0; m < x.values.cols(); ++m)
        x.values(i, m) += config.noise * gauss(rng);
  }
  for (Eigen::Index m = 0; m < config.ambient_dim; ++m)
    x.channel_names.push_back("ch" + std::to_string(m));
  return {std::move(x), std::move(truth)};
}

SynthDynamics parse_dynamics(const std::string& name) {
  if (name == "linear_stable") return SynthDynamics::linear_stable;
  if (name == "limit_cycle") return SynthDynamics::limit_cycle;
  throw ValidationError("unknown dynamics '" + name + "'");
}

std::string to_string(SynthDynamics d) {
  return d == SynthDynamics::linear_stable ? "linear_stable" : "limit_cycle";
}

nlohmann::json synth_truth_to_json(const SynthTruth& truth) {
  const auto& c = truth.config;
  nlohmann::json cfg = {{"q", c.intrinsic_dim},
                        {"M", c.ambient_dim},
                        {"N", c.n_times},
                        {"noise", c.noise},
                        {"seed", c.seed},
                        {"dynamics", to_string(c.dynamics)},
                        {"angular_step", c.angular_step},
                        {"contraction", c.contraction},
                        {"feature_scale", c.feature_scale},
                        {"initial_radius", c.initial_radius},
                        {"initial_offset", c.initial_offset}};
  std::vector<double> phases(truth.phases.data(), truth.phases.data() + truth.phases.size());
  return {{"config", cfg},
          {"latent", io::matrix_to_json(truth.latent)},
          {"frequencies", io::matrix_to_json(truth.frequencies)},
          {"phases", phases}};
}

SynthTruth synth_truth_from_json(const nlohmann::json& j) {
  try {
    SynthTruth t;
    const auto& c = j.at("config");
    t.config.intrinsic_dim = c.at("q").get<int>();
    t.config.ambient_dim = c.at("M").get<Eigen::Index>();
    t.config.n_times = c.at("N").get<Eigen::Index>();
    t.config.noise = c.at("noise").get<double>();
    t.config.seed = c.at("seed").get<std::uint64_t>();
    t.config.dynamics = parse_dynamics(c.at("dynamics").get<std::string>());
    t.config.angular_step = c.at("angular_step").get<double>();
    t.config.contraction = c.at("contraction").get<double>();
    t.config.feature_scale = c.at("feature_scale").get<double>();
    t.config.initial_radius = c.at("initial_radius").get<double>();
    t.config.initial_offset = c.at("initial_offset").get<double>();
    t.latent = io::matrix_from_json(j.at("latent"), "latent");
    t.frequencies = io::matrix_from_json(j.at("frequencies"), "frequencies");
    const auto phases = j.at("phases").get<std::vector<double>>();
    t.phases = Eigen::Map<const Eigen::VectorXd>(phases.data(),
                                                 static_cast<Eigen::Index>(phases.size()));
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synthetic truth document: ") + e.what());
  }
}

}  // namespace dmrom
