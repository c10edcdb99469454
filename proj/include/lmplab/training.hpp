#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmplab/dataset.hpp"
#include "lmplab/dcopf.hpp"
#include "lmplab/nn.hpp"

namespace lmplab {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 32;
  int max_epochs = 300;
  int patience = 10;       // early stop on stalled validation loss
  double lambda_reg = 1.0; // 0 disables the feasibility penalty (plain MSE)
  std::uint64_t seed = 0;
  int threads = 1;
  bool early_stopping = true;
};

struct RecoveredInjections {
  Eigen::VectorXd p;
  std::vector<bool> degenerate;  // linear-cost ties resolved to midpoints
};

/// Price-to-dispatch recovery: per node the minimizer of
/// c_i(p) - pi_hat_i * p over [p_min_i, p_max_i].
RecoveredInjections recover_injections(const Eigen::VectorXd& pi_hat,
                                       const DcOpfProblem& problem,
                                       double tie_eps = 1e-9);

struct FrLossResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d(loss)/d(pi_hat)
};

/// Feasibility-regularized loss
///   ||pi - pi_hat||^2 + lambda_reg * || relu(|S p_hat(pi_hat)| - fmax) ||_1
/// with subgradient 0 at clamp and violation kinks.
FrLossResult fr_loss(const Eigen::VectorXd& pi_hat, const Eigen::VectorXd& pi,
                     const DcOpfProblem& problem, const IsfMatrix& isf,
                     double lambda_reg);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_normalized_l2 = 0.0;
  double val_violation_rate = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int epochs_run = 0;
  double wall_time_sec = 0.0;
  double best_val_loss = 0.0;
};

/// Mini-batch Adam on the FR loss. Both datasets must be normalized
/// with the same stats (train-split stats); the penalty is evaluated in
/// physical units by de-standardizing predictions before recovery.
/// Stores the stats in the model. Deterministic given config.seed; the
/// parallel batch path reduces gradients in sample order and matches
/// the single-threaded result bit for bit.
TrainResult train(Model& model, const Dataset& train_norm, const Dataset& val_norm,
                  const Grid& grid, const TrainConfig& config);

struct MetricsReport {
  double normalized_l2 = 0.0;
  double violation_rate = 0.0;    // total violation over total limit, averaged
  double feasibility_ratio = 1.0; // 1 - violation_rate
  double sample_feasible_fraction = 1.0;
  bool violation_clipped = false; // raw rate exceeded 1 and was clipped
  int epochs_run = 0;
  double wall_time_sec = 0.0;
  long parameter_count = 0;
};

using PredictFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// Physical-unit metrics over a raw dataset via the recovery chain.
/// Sample aggregation sorts before summing, so the result is invariant
/// to scenario order.
MetricsReport evaluate(const PredictFn& predict_physical, const Dataset& raw,
                       const std::vector<DcOpfProblem>& problems,
                       const IsfMatrix& isf, int threads = 1);
MetricsReport evaluate(const Model& model, const Dataset& raw,
                       const std::vector<DcOpfProblem>& problems,
                       const IsfMatrix& isf, int threads = 1);
MetricsReport evaluate_constant(const Eigen::VectorXd& pi_const, const Dataset& raw,
                                const std::vector<DcOpfProblem>& problems,
                                const IsfMatrix& isf, int threads = 1);

/// Per-scenario problems rebuilt from raw features (the recovery chain
/// inputs for evaluate).
std::vector<DcOpfProblem> problems_from_dataset(const Grid& grid,
                                                const Dataset& raw);

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::string& path);

}  // namespace lmplab
