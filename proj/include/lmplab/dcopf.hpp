#pragma once

#include <string>

#include <Eigen/Dense>

#include "lmplab/grid.hpp"

namespace lmplab {

/// Quadratic-cost dc optimal power flow instance. Per-node cost is
/// c_i(p) = cost_a[i]*p^2 + cost_b[i]*p (marginal cost 2*a*p + b).
/// Fixed loads are encoded as p_min == p_max < 0.
struct DcOpfProblem {
  Grid grid;
  Eigen::VectorXd cost_a;
  Eigen::VectorXd cost_b;
  Eigen::VectorXd p_min;
  Eigen::VectorXd p_max;

  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible };

struct DcOpfSolution {
  SolveStatus status = SolveStatus::Infeasible;
  Eigen::VectorXd p_star;    // dispatch (MW)
  Eigen::VectorXd f_star;    // line flows (MW)
  double lambda = 0.0;       // balance dual ($/MW)
  Eigen::VectorXd mu_upper;  // upper flow-limit duals, >= 0
  Eigen::VectorXd mu_lower;  // lower flow-limit duals, >= 0
  Eigen::VectorXd pi;        // locational marginal prices
  double kkt_residual = 0.0;
  int iterations = 0;
  std::string message;  // infeasibility certificate / solver notes

  double objective(const DcOpfProblem& problem) const;
};

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
};

/// Dense primal-dual interior-point solve (Mehrotra predictor-corrector).
/// Returns status Optimal with kkt_residual <= tolerance, or Infeasible
/// with a certificate message. Throws NoConvergenceError when the
/// iteration cap is hit without either outcome.
DcOpfSolution solve_dcopf(const DcOpfProblem& problem, const IsfMatrix& isf,
                          const SolverOptions& options = {});
DcOpfSolution solve_dcopf(const DcOpfProblem& problem,
                          const SolverOptions& options = {});

/// pi = lambda*1 - S^T (mu_upper - mu_lower)
Eigen::VectorXd lmp_from_duals(double lambda, const Eigen::VectorXd& mu_upper,
                               const Eigen::VectorXd& mu_lower,
                               const IsfMatrix& isf);

/// Residuals of the first-order optimality system, one block each for
/// primal feasibility, dual feasibility, stationarity at strictly
/// interior nodes, and complementary slackness.
struct KktReport {
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double stationarity_residual = 0.0;
  double complementarity_residual = 0.0;
  bool primal_ok = false;
  bool dual_ok = false;
  bool stationarity_ok = false;
  bool complementarity_ok = false;

  double max_residual() const;
  bool pass() const {
    return primal_ok && dual_ok && stationarity_ok && complementarity_ok;
  }
};

KktReport verify_kkt(const DcOpfProblem& problem, const DcOpfSolution& solution,
                     double tolerance, const IsfMatrix& isf);
KktReport verify_kkt(const DcOpfProblem& problem, const DcOpfSolution& solution,
                     double tolerance = 1e-8);

/// Exact reference solve by enumerating active sets of the flow and box
/// constraints; limited to N <= 6 and |E| <= 8 (throws TooLargeError).
DcOpfSolution solve_dcopf_oracle(const DcOpfProblem& problem);

}  // namespace lmplab
