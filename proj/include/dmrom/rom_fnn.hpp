// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace dmrom {

/// Single-hidden-layer network with logistic units and a scalar linear output.
///
/// The input and target affine maps standardize data in and out of the
/// network; they default to the identity, in which case
/// output = w_out . S(W1^T z + b1) + b_out.
struct FnnModel {
  Eigen::MatrixXd w1;     // (d+p) x H
  Eigen::VectorXd b1;     // H
  Eigen::VectorXd w_out;  // H
  double b_out = 0.0;
  Eigen::Index target_index = 1;  // which reduced coordinate this model advances

  Eigen::VectorXd input_shift;  // empty means identity
  Eigen::VectorXd input_scale;
  double target_shift = 0.0;
  double target_scale = 1.0;

  Eigen::Index inputs() const { return w1.rows(); }
  Eigen::Index hidden() const { return w1.cols(); }

  static FnnModel zeros(Eigen::Index inputs, Eigen::Index hidden);
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double fnn_forward(const FnnModel& model, const Eigen::VectorXd& psi,
                   const Eigen::VectorXd& stim);

/// Raw network output for rows of `z`, ignoring the affine maps.
Eigen::VectorXd fnn_forward_raw(const FnnModel& model, const Eigen::MatrixXd& z);

struct FnnGradient {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w_out;
  double b_out = 0.0;
  double loss = 0.0;
};

/// Gradient of mean((f(z_i) - y_i)^2) + decay * (|W1|^2 + |w_out|^2) with
/// respect to the raw network parameters. Inputs and targets are taken in
/// network units (the affine maps are not applied).
FnnGradient fnn_gradient(const FnnModel& model, const Eigen::MatrixXd& z,
                         const Eigen::VectorXd& y, double decay);

enum class Optimizer { gradient_descent, lbfgs };

Optimizer parse_optimizer(const std::string& name);
std::string to_string(Optimizer o);

struct TrainConfig {
  std::vector<Eigen::Index> hidden_sizes{2, 4, 8, 16};
  std::vector<double> decay_values{1e-4, 1e-3, 1e-2, 1e-1};
  int folds = 10;
  int repeats = 10;
  int max_epochs = 2000;
  double learning_rate = 0.05;
  double tolerance = 1e-9;
  Optimizer optimizer = Optimizer::gradient_descent;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct CvRecord {
  Eigen::Index hidden = 0;
  double decay = 0.0;
  int repeat = 0;
  int fold = 0;
  double mse = 0.0;  // NaN when the cell diverged
};

struct CvCell {
  Eigen::Index hidden = 0;
  double decay = 0.0;
  double mean_mse = 0.0;
  bool failed = false;
};

struct FnnTrainResult {
  FnnModel model;
  std::vector<CvRecord> records;
  std::vector<CvCell> cells;
  Eigen::Index best_hidden = 0;
  double best_decay = 0.0;
};

/// Fits a network to raw inputs/targets from a fresh seeded initialization.
/// Returns false if the loss became non-finite.
bool fit_network(FnnModel& model, const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                 double decay, const TrainConfig& cfg, std::uint64_t init_seed);

/// Fold assignment for one CV repeat: validation index sets, disjoint,
/// covering 0..n_pairs-1.
std::vector<std::vector<Eigen::Index>> cv_folds(Eigen::Index n_pairs, int folds,
                                                std::uint64_t seed, int repeat);

/// One-step-ahead model for coordinate `target` (1-based) of `coords`,
/// using inputs (coords row i, stim row i) and target coords(i+1, target-1).
/// Grid search under repeated k-fold CV, then a refit on all pairs.
FnnTrainResult fnn_train(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& stim,
                         Eigen::Index target, const TrainConfig& cfg);

/// Closed-loop iteration: each step's outputs are the next step's inputs.
/// `stim_seq` row s is the stimulus accompanying state s (row 0 goes with
/// `init`). Returns h x d.
Eigen::MatrixXd fnn_forecast(const std::vector<FnnModel>& models, const Eigen::VectorXd& init,
                             const Eigen::MatrixXd& stim_seq, Eigen::Index h);

nlohmann::json fnn_model_to_json(const FnnModel& m);
FnnModel fnn_model_from_json(const nlohmann::json& j);

}  // namespace dmrom
