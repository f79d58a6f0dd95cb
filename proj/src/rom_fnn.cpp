// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/rom_fnn.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>
#include <random>

#include "dmrom/error.hpp"
#include "dmrom/io.hpp"
#include "parallel.hpp"

namespace dmrom {

FnnModel FnnModel::zeros(Eigen::Index inputs, Eigen::Index hidden) {
  FnnModel m;
  m.w1 = Eigen::MatrixXd::Zero(inputs, hidden);
  m.b1 = Eigen::VectorXd::Zero(hidden);
  m.w_out = Eigen::VectorXd::Zero(hidden);
  return m;
}

namespace {

Eigen::ArrayXXd logistic(const Eigen::ArrayXXd& a) { return 1.0 / (1.0 + (-a).exp()); }

}  // namespace

Eigen::VectorXd fnn_forward_raw(const FnnModel& model, const Eigen::MatrixXd& z) {
  if (z.cols() != model.inputs()) {
    throw ValidationError("network expects " + std::to_string(model.inputs()) +
                          " inputs, got " + std::to_string(z.cols()));
  }
  Eigen::MatrixXd a = z * model.w1;
  a.rowwise() += model.b1.transpose();
  const Eigen::MatrixXd s = logistic(a.array()).matrix();
  return (s * model.w_out).array() + model.b_out;
}

double fnn_forward(const FnnModel& model, const Eigen::VectorXd& psi,
                   const Eigen::VectorXd& stim) {
  if (psi.size() + stim.size() != model.inputs()) {
    throw ValidationError("network expects " + std::to_string(model.inputs()) +
                          " inputs, got " + std::to_string(psi.size() + stim.size()));
  }
  Eigen::VectorXd z(model.inputs());
  z << psi, stim;
  if (model.input_shift.size() == z.size()) {
    z = (z - model.input_shift).cwiseQuotient(model.input_scale);
  }
  const Eigen::VectorXd a = model.w1.transpose() * z + model.b1;
  double out = model.b_out;
  for (Eigen::Index h = 0; h < a.size(); ++h) out += model.w_out(h) * logistic(a(h));
  return out * model.target_scale + model.target_shift;
}

FnnGradient fnn_gradient(const FnnModel& model, const Eigen::MatrixXd& z,
                         const Eigen::VectorXd& y, double decay) {
  if (z.rows() == 0) throw ValidationError("gradient batch is empty");
  if (z.rows() != y.size()) throw ValidationError("batch inputs and targets differ in length");
  const auto n = static_cast<double>(z.rows());

  Eigen::MatrixXd a = z * model.w1;
  a.rowwise() += model.b1.transpose();
  const Eigen::ArrayXXd s = logistic(a.array());
  const Eigen::VectorXd f = (s.matrix() * model.w_out).array() + model.b_out;
  const Eigen::VectorXd r = f - y;

  FnnGradient g;
  g.loss = r.squaredNorm() / n + decay * (model.w1.squaredNorm() + model.w_out.squaredNorm());
  const Eigen::VectorXd df = (2.0 / n) * r;
  g.w_out = s.matrix().transpose() * df + 2.0 * decay * model.w_out;
  g.b_out = df.sum();
  const Eigen::MatrixXd da =
      ((df * model.w_out.transpose()).array() * s * (1.0 - s)).matrix();
  g.w1 = z.transpose() * da + 2.0 * decay * model.w1;
  g.b1 = da.colwise().sum().transpose();
  return g;
}

Optimizer parse_optimizer(const std::string& name) {
  if (name == "gd" || name == "gradient_descent") return Optimizer::gradient_descent;
  if (name == "lbfgs") return Optimizer::lbfgs;
  throw ValidationError("unknown optimizer '" + name + "'");
}

std::string to_string(Optimizer o) { return o == Optimizer::lbfgs ? "lbfgs" : "gd"; }

void TrainConfig::validate() const {
  if (hidden_sizes.empty() || decay_values.empty()) {
    throw ValidationError("hyperparameter grid is empty");
  }
  for (auto h : hidden_sizes)
    if (h < 1) throw ValidationError("hidden sizes must be positive");
  for (auto d : decay_values)
    if (!(d > 0.0)) throw ValidationError("decay values must be positive");
  if (folds < 2) throw ValidationError("folds must be >= 2");
  if (repeats < 1) throw ValidationError("repeats must be >= 1");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(tolerance >= 0.0)) throw ValidationError("tolerance must be non-negative");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"hidden_sizes", c.hidden_sizes}, {"decay_values", c.decay_values},
          {"folds", c.folds},               {"repeats", c.repeats},
          {"max_epochs", c.max_epochs},     {"learning_rate", c.learning_rate},
          {"tolerance", c.tolerance},       {"optimizer", to_string(c.optimizer)},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("hidden_sizes")) c.hidden_sizes = j.at("hidden_sizes").get<std::vector<Eigen::Index>>();
    if (j.contains("decay_values")) c.decay_values = j.at("decay_values").get<std::vector<double>>();
    c.folds = j.value("folds", c.folds);
    c.repeats = j.value("repeats", c.repeats);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.tolerance = j.value("tolerance", c.tolerance);
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("fnn config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Optimization over the flattened parameter vector [vec(W1), b1, w_out, b_out].

namespace {

Eigen::VectorXd pack(const FnnModel& m) {
  const Eigen::Index nw = m.w1.size();
  const Eigen::Index h = m.hidden();
  Eigen::VectorXd theta(nw + 2 * h + 1);
  theta.head(nw) = Eigen::Map<const Eigen::VectorXd>(m.w1.data(), nw);
  theta.segment(nw, h) = m.b1;
  theta.segment(nw + h, h) = m.w_out;
  theta(nw + 2 * h) = m.b_out;
  return theta;
}

void unpack(const Eigen::VectorXd& theta, FnnModel& m) {
  const Eigen::Index nw = m.w1.size();
  const Eigen::Index h = m.hidden();
  m.w1 = Eigen::Map<const Eigen::MatrixXd>(theta.data(), m.w1.rows(), m.w1.cols());
  m.b1 = theta.segment(nw, h);
  m.w_out = theta.segment(nw + h, h);
  m.b_out = theta(nw + 2 * h);
}

Eigen::VectorXd pack(const FnnGradient& g) {
  const Eigen::Index nw = g.w1.size();
  const Eigen::Index h = g.b1.size();
  Eigen::VectorXd v(nw + 2 * h + 1);
  v.head(nw) = Eigen::Map<const Eigen::VectorXd>(g.w1.data(), nw);
  v.segment(nw, h) = g.b1;
  v.segment(nw + h, h) = g.w_out;
  v(nw + 2 * h) = g.b_out;
  return v;
}

struct Objective {
  FnnModel& model;
  const Eigen::MatrixXd& z;
  const Eigen::VectorXd& y;
  double decay;

  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    unpack(theta, model);
    const FnnGradient g = fnn_gradient(model, z, y, decay);
    grad = pack(g);
    return g.loss;
  }
};

bool run_gradient_descent(Objective& obj, Eigen::VectorXd& theta, const TrainConfig& cfg) {
  Eigen::VectorXd grad;
  double loss = obj(theta, grad);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (!std::isfinite(loss)) return false;
    theta -= cfg.learning_rate * grad;
    const double next = obj(theta, grad);
    if (!std::isfinite(next)) return false;
    const bool converged = std::abs(loss - next) < cfg.tolerance;
    loss = next;
    if (converged) break;
  }
  return std::isfinite(loss);
}

bool run_lbfgs(Objective& obj, Eigen::VectorXd& theta, const TrainConfig& cfg) {
  constexpr std::size_t kMemory = 10;
  constexpr double kArmijo = 1e-4;
  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;

  Eigen::VectorXd grad;
  double loss = obj(theta, grad);
  if (!std::isfinite(loss)) return false;
  Eigen::VectorXd trial_grad;

  for (int iter = 0; iter < cfg.max_epochs; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() < 1e-14) break;

    // Two-loop recursion.
    Eigen::VectorXd dir = -grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(dir);
      dir -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(dir);
      dir += (alpha[i] - beta) * s_hist[i];
    }
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -grad;
      slope = -grad.squaredNorm();
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / grad.norm()) : 1.0;
    Eigen::VectorXd trial;
    double trial_loss = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      trial = theta + step * dir;
      trial_loss = obj(trial, trial_grad);
      if (std::isfinite(trial_loss) && trial_loss <= loss + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Eigen::VectorXd s = trial - theta;
    Eigen::VectorXd yv = trial_grad - grad;
    const double sy = s.dot(yv);
    if (sy > 1e-16 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double change = loss - trial_loss;
    theta = trial;
    grad = trial_grad;
    loss = trial_loss;
    if (change <= cfg.tolerance * std::abs(loss)) break;
  }
  obj(theta, grad);
  return std::isfinite(loss);
}

}  // namespace

bool fit_network(FnnModel& model, const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                 double decay, const TrainConfig& cfg, std::uint64_t init_seed) {
  std::mt19937_64 rng(init_seed);
  std::uniform_real_distribution<double> init(-0.5, 0.5);
  Eigen::VectorXd theta = pack(model);
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = init(rng);

  Objective obj{model, z, y, decay};
  const bool ok = cfg.optimizer == Optimizer::lbfgs ? run_lbfgs(obj, theta, cfg)
                                                    : run_gradient_descent(obj, theta, cfg);
  unpack(theta, model);
  return ok && theta.allFinite();
}

std::vector<std::vector<Eigen::Index>> cv_folds(Eigen::Index n_pairs, int folds,
                                                std::uint64_t seed, int repeat) {
  if (folds < 2 || n_pairs < folds) {
    throw ValidationError("cannot split " + std::to_string(n_pairs) + " pairs into " +
                          std::to_string(folds) + " folds");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_pairs));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(detail::derive_seed(seed, {0xF01D, static_cast<std::uint64_t>(repeat)}));
  // Fisher-Yates with an explicit index draw, independent of std::shuffle's
  // library-specific algorithm.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    const auto lo = static_cast<std::size_t>(n_pairs * f / folds);
    const auto hi = static_cast<std::size_t>(n_pairs * (f + 1) / folds);
    out[static_cast<std::size_t>(f)].assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                            order.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(out[static_cast<std::size_t>(f)].begin(), out[static_cast<std::size_t>(f)].end());
  }
  return out;
}

namespace {

struct Standardizer {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;
};

Standardizer column_standardizer(const Eigen::MatrixXd& m) {
  Standardizer s;
  s.shift = m.colwise().mean().transpose();
  s.scale.resize(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double var = m.rows() > 1 ? (m.col(c).array() - s.shift(c)).square().sum() /
                                          static_cast<double>(m.rows() - 1)
                                    : 0.0;
    const double sd = std::sqrt(var);
    s.scale(c) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

std::vector<Eigen::Index> complement(Eigen::Index n, const std::vector<Eigen::Index>& held) {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(n) - held.size());
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (k < held.size() && held[k] == i) {
      ++k;
      continue;
    }
    out.push_back(i);
  }
  return out;
}

}  // namespace

FnnTrainResult fnn_train(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& stim,
                         Eigen::Index target, const TrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = coords.rows();
  const Eigen::Index d = coords.cols();
  if (target < 1 || target > d) throw ValidationError("target index out of range");
  if (stim.rows() != n) throw ValidationError("stimulus rows do not match coordinates");
  if (n < cfg.folds + 1) {
    throw ValidationError("need at least folds + 1 = " + std::to_string(cfg.folds + 1) +
                          " training points, got " + std::to_string(n));
  }
  if (!coords.allFinite() || !stim.allFinite()) throw ValidationError("training data not finite");

  const Eigen::Index pairs = n - 1;
  Eigen::MatrixXd z(pairs, d + stim.cols());
  z << coords.topRows(pairs), stim.topRows(pairs);
  const Eigen::VectorXd y_raw = coords.col(target - 1).tail(pairs);

  const Standardizer in = column_standardizer(z);
  const Standardizer out = column_standardizer(Eigen::MatrixXd(y_raw));
  Eigen::MatrixXd zs = z;
  for (Eigen::Index c = 0; c < z.cols(); ++c)
    zs.col(c) = (z.col(c).array() - in.shift(c)) / in.scale(c);
  const Eigen::VectorXd ys = (y_raw.array() - out.shift(0)) / out.scale(0);

  std::vector<std::vector<std::vector<Eigen::Index>>> folds_by_repeat;
  for (int r = 0; r < cfg.repeats; ++r) folds_by_repeat.push_back(cv_folds(pairs, cfg.folds, cfg.seed, r));

  const std::size_t n_h = cfg.hidden_sizes.size();
  const std::size_t n_decay = cfg.decay_values.size();
  const std::size_t per_cell = static_cast<std::size_t>(cfg.repeats * cfg.folds);

  FnnTrainResult result;
  result.records.resize(n_h * n_decay * per_cell);
  detail::parallel_for(result.records.size(), cfg.threads, [&](std::size_t task) {
    const std::size_t cell = task / per_cell;
    const std::size_t hi = cell / n_decay;
    const std::size_t di = cell % n_decay;
    const int r = static_cast<int>((task % per_cell) / static_cast<std::size_t>(cfg.folds));
    const int f = static_cast<int>(task % static_cast<std::size_t>(cfg.folds));
    const auto& held = folds_by_repeat[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)];
    const auto fit_rows = complement(pairs, held);

    FnnModel m = FnnModel::zeros(z.cols(), cfg.hidden_sizes[hi]);
    const std::uint64_t seed = detail::derive_seed(
        cfg.seed, {static_cast<std::uint64_t>(target), hi, di, static_cast<std::uint64_t>(r),
                   static_cast<std::uint64_t>(f)});
    CvRecord rec{cfg.hidden_sizes[hi], cfg.decay_values[di], r, f,
                 std::numeric_limits<double>::quiet_NaN()};
    if (fit_network(m, select_rows(zs, fit_rows), select_rows(ys, fit_rows),
                    cfg.decay_values[di], cfg, seed)) {
      const Eigen::VectorXd pred = fnn_forward_raw(m, select_rows(zs, held));
      const double mse = (pred - select_rows(ys, held)).squaredNorm() /
                         static_cast<double>(held.size());
      if (std::isfinite(mse)) rec.mse = mse;
    }
    result.records[task] = rec;
  });

  // Grid order is (hidden ascending as given, decay ascending as given);
  // strict comparison keeps the first minimum on ties.
  std::vector<std::size_t> cell_order(n_h * n_decay);
  std::iota(cell_order.begin(), cell_order.end(), std::size_t{0});
  std::stable_sort(cell_order.begin(), cell_order.end(), [&](std::size_t a, std::size_t b) {
    const auto ha = cfg.hidden_sizes[a / n_decay], hb = cfg.hidden_sizes[b / n_decay];
    if (ha != hb) return ha < hb;
    return cfg.decay_values[a % n_decay] < cfg.decay_values[b % n_decay];
  });

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_cell = n_h * n_decay;
  result.cells.resize(n_h * n_decay);
  for (std::size_t cell = 0; cell < n_h * n_decay; ++cell) {
    CvCell& c = result.cells[cell];
    c.hidden = cfg.hidden_sizes[cell / n_decay];
    c.decay = cfg.decay_values[cell % n_decay];
    double sum = 0.0;
    for (std::size_t k = 0; k < per_cell; ++k) {
      const double mse = result.records[cell * per_cell + k].mse;
      if (std::isnan(mse)) c.failed = true;
      sum += mse;
    }
    c.mean_mse = c.failed ? std::numeric_limits<double>::quiet_NaN()
                          : sum / static_cast<double>(per_cell);
  }
  for (std::size_t cell : cell_order) {
    const CvCell& c = result.cells[cell];
    if (!c.failed && c.mean_mse < best) {
      best = c.mean_mse;
      best_cell = cell;
    }
  }
  if (best_cell == n_h * n_decay) throw NumericalError("every grid cell diverged during CV");

  result.best_hidden = result.cells[best_cell].hidden;
  result.best_decay = result.cells[best_cell].decay;
  FnnModel m = FnnModel::zeros(z.cols(), result.best_hidden);
  const std::uint64_t seed = detail::derive_seed(
      cfg.seed, {static_cast<std::uint64_t>(target), best_cell / n_decay, best_cell % n_decay,
                 0xF17A1ULL});
  if (!fit_network(m, zs, ys, result.best_decay, cfg, seed)) {
    throw NumericalError("final refit diverged");
  }
  m.target_index = target;
  m.input_shift = in.shift;
  m.input_scale = in.scale;
  m.target_shift = out.shift(0);
  m.target_scale = out.scale(0);
  result.model = std::move(m);
  return result;
}

Eigen::MatrixXd fnn_forecast(const std::vector<FnnModel>& models, const Eigen::VectorXd& init,
                             const Eigen::MatrixXd& stim_seq, Eigen::Index h) {
  if (h < 0) throw ValidationError("horizon must be non-negative");
  const Eigen::Index d = init.size();
  if (static_cast<Eigen::Index>(models.size()) != d) {
    throw ValidationError("need one model per coordinate: " + std::to_string(models.size()) +
                          " models for " + std::to_string(d) + " coordinates");
  }
  for (std::size_t l = 0; l < models.size(); ++l) {
    if (models[l].target_index != static_cast<Eigen::Index>(l) + 1) {
      throw ValidationError("model " + std::to_string(l) + " targets coordinate " +
                            std::to_string(models[l].target_index));
    }
  }
  if (stim_seq.rows() < h) throw ValidationError("stimulus sequence shorter than the horizon");

  Eigen::MatrixXd out(h, d);
  Eigen::VectorXd state = init;
  for (Eigen::Index s = 0; s < h; ++s) {
    const Eigen::VectorXd stim = stim_seq.row(s).transpose();
    Eigen::VectorXd next(d);
    for (Eigen::Index l = 0; l < d; ++l) next(l) = fnn_forward(models[static_cast<std::size_t>(l)], state, stim);
    if (!next.allFinite()) throw DivergenceError(static_cast<std::size_t>(s + 1));
    out.row(s) = next.transpose();
    state = next;
  }
  return out;
}

nlohmann::json fnn_model_to_json(const FnnModel& m) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"target_index", m.target_index}, {"hidden", m.hidden()},
          {"inputs", m.inputs()},           {"W1", io::matrix_to_json(m.w1)},
          {"b1", vec(m.b1)},                {"w_out", vec(m.w_out)},
          {"b_out", m.b_out},               {"input_shift", vec(m.input_shift)},
          {"input_scale", vec(m.input_scale)}, {"target_shift", m.target_shift},
          {"target_scale", m.target_scale}};
}

FnnModel fnn_model_from_json(const nlohmann::json& j) {
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  try {
    FnnModel m;
    m.target_index = j.at("target_index").get<Eigen::Index>();
    m.w1 = io::matrix_from_json(j.at("W1"), "W1");
    m.b1 = vec(j.at("b1"));
    m.w_out = vec(j.at("w_out"));
    m.b_out = j.at("b_out").get<double>();
    m.input_shift = vec(j.at("input_shift"));
    m.input_scale = vec(j.at("input_scale"));
    m.target_shift = j.at("target_shift").get<double>();
    m.target_scale = j.at("target_scale").get<double>();
    const Eigen::Index h = m.b1.size();
    if (m.w1.cols() != h || m.w_out.size() != h || h < 1) {
      throw ValidationError("network layer sizes are inconsistent");
    }
    if (m.input_shift.size() != m.input_scale.size() ||
        (m.input_shift.size() != 0 && m.input_shift.size() != m.w1.rows())) {
      throw ValidationError("network input standardization has the wrong size");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("network model: ") + e.what());
  }
}

}  // namespace dmrom
