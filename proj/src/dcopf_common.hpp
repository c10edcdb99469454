#pragma once

// Internal helpers shared by the interior-point solver and the
// active-set enumeration oracle. Not part of the public API.

#include <vector>

#include <Eigen/Dense>

#include "lmplab/dcopf.hpp"

namespace lmplab::detail {

// dc-OPF with fixed nodes (p_min == p_max) eliminated. Variables are the
// free-node injections y. Constraint rows of G y <= h are stacked as
// [box upper; box lower; flow upper; flow lower], so the dual vector z
// splits into [eta_up; eta_lo; mu_up; mu_lo].
struct ReducedDcOpf {
  std::vector<int> free_nodes;
  Eigen::VectorXd p_fixed_full;  // length N, zeros at free nodes
  Eigen::VectorXd q_diag;        // 2*a on free nodes
  Eigen::VectorXd c_lin;         // b on free nodes
  double balance_rhs = 0.0;      // 1^T y = balance_rhs
  Eigen::MatrixXd g;             // m x n_free
  Eigen::VectorXd h;             // m
  Eigen::MatrixXd s_free;        // |E| x n_free ISF columns
  int n_free = 0;
  int n_edges = 0;

  int row_box_up(int k) const { return k; }
  int row_box_lo(int k) const { return n_free + k; }
  int row_flow_up(int e) const { return 2 * n_free + e; }
  int row_flow_lo(int e) const { return 2 * n_free + n_edges + e; }
};

ReducedDcOpf reduce_problem(const DcOpfProblem& problem, const IsfMatrix& isf);

// Expands a reduced optimum back to a full DcOpfSolution (flows, duals,
// prices, objective-side bookkeeping left to the caller).
DcOpfSolution assemble_solution(const DcOpfProblem& problem, const IsfMatrix& isf,
                                const ReducedDcOpf& red, const Eigen::VectorXd& y,
                                double nu, const Eigen::VectorXd& z);

// Balance-vs-box feasibility precheck; returns a certificate message, or
// an empty string when the necessary condition holds.
std::string balance_infeasibility_certificate(const DcOpfProblem& problem);

}  // namespace lmplab::detail
