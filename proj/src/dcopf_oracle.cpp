#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "dcopf_common.hpp"
#include "lmplab/errors.hpp"

namespace lmplab {

namespace {

constexpr double kFeasTol = 1e-8;
constexpr double kSignTol = 1e-8;

struct Candidate {
  double cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd y;
  double nu = 0.0;
  Eigen::VectorXd z;  // full m-vector, zeros off the active set
  bool found = false;
};

// Rows that cannot be active together: the two sides of one box or one
// flow limit.
int conflicting_row(const detail::ReducedDcOpf& red, int row) {
  const int nf = red.n_free;
  const int me = red.n_edges;
  if (row < nf) return row + nf;
  if (row < 2 * nf) return row - nf;
  if (row < 2 * nf + me) return row + me;
  return row - me;
}

void try_active_set(const detail::ReducedDcOpf& red, const std::vector<int>& active,
                    Candidate& best) {
  const int nf = red.n_free;
  const int na = static_cast<int>(active.size());
  const int dim = nf + 1 + na;

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs(dim);
  kkt.topLeftCorner(nf, nf).diagonal() = red.q_diag;
  // balance row/column
  kkt.block(nf, 0, 1, nf).setOnes();
  kkt.block(0, nf, nf, 1).setOnes();
  rhs.head(nf) = -red.c_lin;
  rhs[nf] = red.balance_rhs;
  for (int a = 0; a < na; ++a) {
    kkt.block(nf + 1 + a, 0, 1, nf) = red.g.row(active[a]);
    kkt.block(0, nf + 1 + a, nf, 1) = red.g.row(active[a]).transpose();
    rhs[nf + 1 + a] = red.h[active[a]];
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) return;
  const Eigen::VectorXd sol = lu.solve(rhs);
  const Eigen::VectorXd y = sol.head(nf);
  const double nu = sol[nf];

  // active multipliers must be nonnegative
  for (int a = 0; a < na; ++a)
    if (sol[nf + 1 + a] < -kSignTol) return;
  // all constraints must hold
  const Eigen::VectorXd slack = red.h - red.g * y;
  for (Eigen::Index i = 0; i < slack.size(); ++i)
    if (slack[i] < -kFeasTol * (1.0 + std::abs(red.h[i]))) return;

  const double cost = 0.5 * y.dot(red.q_diag.cwiseProduct(y)) + red.c_lin.dot(y);
  if (!best.found || cost < best.cost - 1e-12) {
    best.found = true;
    best.cost = cost;
    best.y = y;
    best.nu = nu;
    best.z = Eigen::VectorXd::Zero(red.h.size());
    for (int a = 0; a < na; ++a) best.z[active[a]] = std::max(0.0, sol[nf + 1 + a]);
  }
}

void enumerate(const detail::ReducedDcOpf& red, std::vector<int>& active, int start,
               int remaining, Candidate& best) {
  try_active_set(red, active, best);
  if (remaining == 0) return;
  const int m = static_cast<int>(red.h.size());
  for (int row = start; row < m; ++row) {
    bool conflict = false;
    for (int a : active)
      if (a == conflicting_row(red, row)) conflict = true;
    if (conflict) continue;
    active.push_back(row);
    enumerate(red, active, row + 1, remaining - 1, best);
    active.pop_back();
  }
}

}  // namespace

DcOpfSolution solve_dcopf_oracle(const DcOpfProblem& problem) {
  problem.validate();
  if (problem.grid.n_nodes > 6 || problem.grid.n_edges() > 8)
    throw TooLargeError(
        "oracle guard: needs N <= 6 and |E| <= 8 to bound the enumeration");

  DcOpfSolution infeasible;
  infeasible.status = SolveStatus::Infeasible;
  if (auto cert = detail::balance_infeasibility_certificate(problem);
      !cert.empty()) {
    infeasible.message = cert;
    return infeasible;
  }

  const IsfMatrix isf = build_isf(problem.grid);
  const detail::ReducedDcOpf red = detail::reduce_problem(problem, isf);

  if (red.n_free == 0) {
    const double imbalance = red.p_fixed_full.sum();
    if (std::abs(imbalance) > 1e-9) {
      infeasible.message = "all injections fixed with nonzero imbalance";
      return infeasible;
    }
    const Eigen::VectorXd flows = isf.values * red.p_fixed_full;
    for (int e = 0; e < red.n_edges; ++e)
      if (std::abs(flows[e]) > problem.grid.edges[e].flow_limit + 1e-9) {
        infeasible.message = "fixed injections violate a flow limit";
        return infeasible;
      }
    return detail::assemble_solution(problem, isf, red, Eigen::VectorXd(), 0.0,
                                     Eigen::VectorXd::Zero(red.h.size()));
  }

  Candidate best;
  std::vector<int> active;
  // with the balance equality, at most n_free-1 inequalities can be
  // active with independent rows
  enumerate(red, active, 0, std::max(0, red.n_free - 1), best);

  if (!best.found) {
    infeasible.message = "active-set enumeration found no feasible candidate";
    return infeasible;
  }

  DcOpfSolution sol =
      detail::assemble_solution(problem, isf, red, best.y, best.nu, best.z);
  // residuals are at machine precision by construction; report the
  // actual worst one for the audit trail
  const Eigen::VectorXd rd = red.q_diag.cwiseProduct(best.y) + red.c_lin +
                             Eigen::VectorXd::Constant(red.n_free, best.nu) +
                             red.g.transpose() * best.z;
  const double rp = std::abs(best.y.sum() - red.balance_rhs);
  const Eigen::VectorXd slack = red.h - red.g * best.y;
  double comp = 0.0;
  for (Eigen::Index i = 0; i < slack.size(); ++i)
    comp = std::max(comp, std::abs(best.z[i] * slack[i]));
  sol.kkt_residual = std::max({rd.cwiseAbs().maxCoeff(), rp, comp});
  return sol;
}

}  // namespace lmplab
