#include "lmplab/dcopf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

#include "dcopf_common.hpp"
#include "lmplab/errors.hpp"
#include "lmplab/log.hpp"

namespace lmplab {

void DcOpfProblem::validate() const {
  grid.validate();
  const auto n = grid.n_nodes;
  if (cost_a.size() != n || cost_b.size() != n || p_min.size() != n ||
      p_max.size() != n)
    throw DimensionMismatchError("problem vectors must have one entry per node");
  for (int i = 0; i < n; ++i) {
    if (cost_a[i] < 0.0)
      throw InvalidConfigError("cost_a must be nonnegative at node " +
                               std::to_string(i));
    if (p_min[i] > p_max[i])
      throw InvalidConfigError("p_min > p_max at node " + std::to_string(i));
  }
  if (p_min.sum() > 0.0 || p_max.sum() < 0.0)
    throw InvalidConfigError(
        "injection bounds cannot balance: need sum p_min <= 0 <= sum p_max");
}

double DcOpfSolution::objective(const DcOpfProblem& problem) const {
  double total = 0.0;
  for (int i = 0; i < problem.grid.n_nodes; ++i)
    total += problem.cost_a[i] * p_star[i] * p_star[i] +
             problem.cost_b[i] * p_star[i];
  return total;
}

Eigen::VectorXd lmp_from_duals(double lambda, const Eigen::VectorXd& mu_upper,
                               const Eigen::VectorXd& mu_lower,
                               const IsfMatrix& isf) {
  if (mu_upper.size() != isf.values.rows() || mu_lower.size() != isf.values.rows())
    throw DimensionMismatchError("flow dual length must match ISF row count");
  for (Eigen::Index e = 0; e < mu_upper.size(); ++e)
    if (mu_upper[e] < 0.0 || mu_lower[e] < 0.0)
      throw InvalidConfigError("flow duals must be nonnegative");
  return Eigen::VectorXd::Constant(isf.values.cols(), lambda) -
         isf.values.transpose() * (mu_upper - mu_lower);
}

namespace detail {

std::string balance_infeasibility_certificate(const DcOpfProblem& problem) {
  const double lo = problem.p_min.sum();
  const double hi = problem.p_max.sum();
  std::ostringstream msg;
  if (lo > 0.0) {
    msg << "balance impossible: sum of lower injection bounds is " << lo << " > 0";
    return msg.str();
  }
  if (hi < 0.0) {
    msg << "balance impossible: sum of upper injection bounds is " << hi << " < 0";
    return msg.str();
  }
  return {};
}

ReducedDcOpf reduce_problem(const DcOpfProblem& problem, const IsfMatrix& isf) {
  const int n = problem.grid.n_nodes;
  const int m_edges = problem.grid.n_edges();
  ReducedDcOpf red;
  red.n_edges = m_edges;
  red.p_fixed_full = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (problem.p_min[i] == problem.p_max[i])
      red.p_fixed_full[i] = problem.p_min[i];
    else
      red.free_nodes.push_back(i);
  }
  red.n_free = static_cast<int>(red.free_nodes.size());
  const int nf = red.n_free;
  red.q_diag.resize(nf);
  red.c_lin.resize(nf);
  red.s_free.resize(m_edges, nf);
  for (int k = 0; k < nf; ++k) {
    const int i = red.free_nodes[k];
    red.q_diag[k] = 2.0 * problem.cost_a[i];
    red.c_lin[k] = problem.cost_b[i];
    red.s_free.col(k) = isf.values.col(i);
  }
  red.balance_rhs = -red.p_fixed_full.sum();

  const Eigen::VectorXd fixed_flow = isf.values * red.p_fixed_full;
  Eigen::VectorXd fmax(m_edges);
  for (int e = 0; e < m_edges; ++e) fmax[e] = problem.grid.edges[e].flow_limit;

  const int m = 2 * nf + 2 * m_edges;
  red.g = Eigen::MatrixXd::Zero(m, nf);
  red.h.resize(m);
  for (int k = 0; k < nf; ++k) {
    const int i = red.free_nodes[k];
    red.g(red.row_box_up(k), k) = 1.0;
    red.h[red.row_box_up(k)] = problem.p_max[i];
    red.g(red.row_box_lo(k), k) = -1.0;
    red.h[red.row_box_lo(k)] = -problem.p_min[i];
  }
  if (m_edges > 0 && nf > 0) {
    red.g.block(red.row_flow_up(0), 0, m_edges, nf) = red.s_free;
    red.g.block(red.row_flow_lo(0), 0, m_edges, nf) = -red.s_free;
  }
  for (int e = 0; e < m_edges; ++e) {
    red.h[red.row_flow_up(e)] = fmax[e] - fixed_flow[e];
    red.h[red.row_flow_lo(e)] = fmax[e] + fixed_flow[e];
  }
  return red;
}

DcOpfSolution assemble_solution(const DcOpfProblem& problem, const IsfMatrix& isf,
                                const ReducedDcOpf& red, const Eigen::VectorXd& y,
                                double nu, const Eigen::VectorXd& z) {
  const int n = problem.grid.n_nodes;
  const int m_edges = problem.grid.n_edges();
  DcOpfSolution sol;
  sol.status = SolveStatus::Optimal;
  sol.p_star = red.p_fixed_full;
  for (int k = 0; k < red.n_free; ++k) sol.p_star[red.free_nodes[k]] = y[k];
  sol.f_star = isf.values * sol.p_star;
  sol.lambda = -nu;
  sol.mu_upper.resize(m_edges);
  sol.mu_lower.resize(m_edges);
  for (int e = 0; e < m_edges; ++e) {
    sol.mu_upper[e] = std::max(0.0, z[red.row_flow_up(e)]);
    sol.mu_lower[e] = std::max(0.0, z[red.row_flow_lo(e)]);
  }
  sol.pi = lmp_from_duals(sol.lambda, sol.mu_upper, sol.mu_lower, isf);
  (void)n;
  return sol;
}

namespace {

// Largest alpha in (0, 1] keeping v + alpha*dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  return alpha;
}

struct IpmDirections {
  Eigen::VectorXd dy, ds, dz;
  double dnu = 0.0;
};

}  // namespace

}  // namespace detail

DcOpfSolution solve_dcopf(const DcOpfProblem& problem, const IsfMatrix& isf,
                          const SolverOptions& options) {
  using namespace detail;
  problem.validate();
  if (options.tolerance <= 0.0) throw InvalidConfigError("tolerance must be > 0");

  DcOpfSolution infeasible;
  infeasible.status = SolveStatus::Infeasible;
  if (auto cert = balance_infeasibility_certificate(problem); !cert.empty()) {
    infeasible.message = cert;
    return infeasible;
  }

  const ReducedDcOpf red = reduce_problem(problem, isf);
  const int nf = red.n_free;
  const int m = static_cast<int>(red.h.size());

  if (nf == 0) {
    // Everything fixed: feasibility check only.
    const double imbalance = red.p_fixed_full.sum();
    if (std::abs(imbalance) > 1e-9) {
      infeasible.message = "all injections fixed with nonzero imbalance";
      return infeasible;
    }
    Eigen::VectorXd flows = isf.values * red.p_fixed_full;
    for (int e = 0; e < red.n_edges; ++e)
      if (std::abs(flows[e]) > problem.grid.edges[e].flow_limit + 1e-9) {
        infeasible.message = "fixed injections violate a flow limit";
        return infeasible;
      }
    return assemble_solution(problem, isf, red, Eigen::VectorXd(), 0.0,
                             Eigen::VectorXd::Zero(m));
  }

  // Infeasible-start Mehrotra predictor-corrector on
  //   min 1/2 y'Qy + c'y  s.t. 1'y = r, G y + s = h, s >= 0.
  Eigen::VectorXd y(nf);
  for (int k = 0; k < nf; ++k) {
    const int i = red.free_nodes[k];
    y[k] = 0.5 * (problem.p_min[i] + problem.p_max[i]);
  }
  Eigen::VectorXd s = (red.h - red.g * y).cwiseMax(1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(m);
  double nu = 0.0;

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(nf);
  double res = std::numeric_limits<double>::infinity();
  int stalled = 0;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd rd =
        red.q_diag.cwiseProduct(y) + red.c_lin + Eigen::VectorXd::Constant(nf, nu) +
        red.g.transpose() * z;
    const double rp = y.sum() - red.balance_rhs;
    const Eigen::VectorXd rg = red.g * y + s - red.h;
    const Eigen::VectorXd comp = s.cwiseProduct(z);
    const double mu = comp.sum() / m;

    res = std::max({rd.cwiseAbs().maxCoeff(), std::abs(rp),
                    rg.cwiseAbs().maxCoeff(), comp.maxCoeff()});
    if (res <= options.tolerance) {
      DcOpfSolution sol = assemble_solution(problem, isf, red, y, nu, z);
      sol.kkt_residual = res;
      sol.iterations = iter;
      return sol;
    }
    const double primal_infeas = std::max(std::abs(rp), rg.cwiseAbs().maxCoeff());
    const double dual_norm = std::max(z.cwiseAbs().maxCoeff(), std::abs(nu));
    const bool diverged =
        dual_norm > 1e13 ||
        (dual_norm > 1e9 && primal_infeas > 10.0 * options.tolerance) ||
        (stalled >= 5 && primal_infeas > 100.0 * options.tolerance);
    if (diverged) {
      std::ostringstream msg;
      msg << "interior-point duals diverged (|z| ~ " << dual_norm
          << ") with primal residual " << primal_infeas
          << "; problem is infeasible";
      infeasible.message = msg.str();
      return infeasible;
    }
    if (stalled >= 5)
      throw NoConvergenceError("interior-point stalled with residual " +
                               std::to_string(res));

    // barrier weights, capped to keep the normal matrix finite when
    // slacks collapse on the boundary
    const Eigen::VectorXd s_div = s.cwiseMax(1e-300);
    const Eigen::VectorXd w =
        z.cwiseQuotient(s_div).cwiseMin(1e16).cwiseMax(0.0);
    Eigen::MatrixXd mmat = red.g.transpose() * w.asDiagonal() * red.g;
    mmat.diagonal() += red.q_diag;

    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    double ridge = 0.0;
    const double diag_scale = std::max(mmat.diagonal().maxCoeff(), 1.0);
    for (int attempt = 0; attempt < 8; ++attempt) {
      if (ridge > 0.0) {
        Eigen::MatrixXd reg = mmat;
        reg.diagonal().array() += ridge;
        ldlt.compute(reg);
      } else {
        ldlt.compute(mmat);
      }
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) break;
      ridge = ridge == 0.0 ? 1e-14 * diag_scale : ridge * 100.0;
    }
    if (ldlt.info() != Eigen::Success)
      throw NoConvergenceError("interior-point normal matrix factorization failed");

    auto solve_newton = [&](const Eigen::VectorXd& rc) {
      detail::IpmDirections d;
      const Eigen::VectorXd t = (z.cwiseProduct(rg) - rc).cwiseQuotient(s_div);
      const Eigen::VectorXd rhs1 = -rd - red.g.transpose() * t;
      const Eigen::VectorXd u = ldlt.solve(rhs1);
      const Eigen::VectorXd v = ldlt.solve(ones);
      d.dnu = (u.sum() + rp) / v.sum();
      d.dy = u - d.dnu * v;
      d.ds = -rg - red.g * d.dy;
      d.dz = (-rc - z.cwiseProduct(d.ds)).cwiseQuotient(s_div);
      return d;
    };

    // predictor
    const auto aff = solve_newton(comp);
    const double ap_aff = detail::max_step(s, aff.ds);
    const double ad_aff = detail::max_step(z, aff.dz);
    const double mu_aff =
        (s + ap_aff * aff.ds).dot(z + ad_aff * aff.dz) / m;
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::clamp(sigma, 0.0, 1.0);

    // corrector
    const Eigen::VectorXd rc =
        comp + aff.ds.cwiseProduct(aff.dz) - Eigen::VectorXd::Constant(m, sigma * mu);
    const auto dir = solve_newton(rc);

    const double fraction = 0.995;
    const double ap = std::min(1.0, fraction * detail::max_step(s, dir.ds));
    const double ad = std::min(1.0, fraction * detail::max_step(z, dir.dz));
    stalled = std::max(ap, ad) < 1e-10 ? stalled + 1 : 0;
    y += ap * dir.dy;
    s += ap * dir.ds;
    nu += ad * dir.dnu;
    z += ad * dir.dz;
    log(LogLevel::Debug, "ipm iter %d res %.3e mu %.3e ap %.3f ad %.3f", iter, res,
        mu, ap, ad);
  }

  std::ostringstream msg;
  msg << "no convergence after " << options.max_iterations
      << " iterations; worst residual " << res;
  throw NoConvergenceError(msg.str());
}

DcOpfSolution solve_dcopf(const DcOpfProblem& problem, const SolverOptions& options) {
  return solve_dcopf(problem, build_isf(problem.grid), options);
}

double KktReport::max_residual() const {
  return std::max({primal_residual, dual_residual, stationarity_residual,
                   complementarity_residual});
}

KktReport verify_kkt(const DcOpfProblem& problem, const DcOpfSolution& solution,
                     double tolerance, const IsfMatrix& isf) {
  if (solution.status != SolveStatus::Optimal)
    throw InvalidConfigError("verify_kkt needs an Optimal solution");
  const int n = problem.grid.n_nodes;
  const int m_edges = problem.grid.n_edges();
  KktReport rep;

  // primal feasibility: balance, box, flow limits, and flow consistency
  double primal = std::abs(solution.p_star.sum());
  for (int i = 0; i < n; ++i) {
    primal = std::max(primal, problem.p_min[i] - solution.p_star[i]);
    primal = std::max(primal, solution.p_star[i] - problem.p_max[i]);
  }
  const Eigen::VectorXd flows = isf.values * solution.p_star;
  for (int e = 0; e < m_edges; ++e) {
    const double fmax = problem.grid.edges[e].flow_limit;
    primal = std::max(primal, std::abs(flows[e]) - fmax);
    primal = std::max(primal, std::abs(flows[e] - solution.f_star[e]));
  }
  rep.primal_residual = std::max(0.0, primal);

  // dual feasibility: flow duals nonnegative
  double dual = 0.0;
  for (int e = 0; e < m_edges; ++e) {
    dual = std::max(dual, -solution.mu_upper[e]);
    dual = std::max(dual, -solution.mu_lower[e]);
  }
  rep.dual_residual = std::max(0.0, dual);

  // stationarity: marginal cost equals price at strictly interior nodes;
  // at a bound the price-cost gap must have the certifying sign
  double stat = 0.0;
  const Eigen::VectorXd pi_check =
      lmp_from_duals(solution.lambda, solution.mu_upper.cwiseMax(0.0),
                     solution.mu_lower.cwiseMax(0.0), isf);
  for (int i = 0; i < n; ++i) {
    stat = std::max(stat, std::abs(pi_check[i] - solution.pi[i]));
    const double marginal =
        2.0 * problem.cost_a[i] * solution.p_star[i] + problem.cost_b[i];
    const double gap = solution.pi[i] - marginal;  // = eta_up - eta_lo
    const bool at_lower = solution.p_star[i] - problem.p_min[i] <= tolerance;
    const bool at_upper = problem.p_max[i] - solution.p_star[i] <= tolerance;
    if (!at_lower && !at_upper)
      stat = std::max(stat, std::abs(gap));
    else if (at_upper && !at_lower)
      stat = std::max(stat, -gap);  // needs eta_up >= 0
    else if (at_lower && !at_upper)
      stat = std::max(stat, gap);  // needs eta_lo >= 0
    // fixed nodes (both) impose nothing
  }
  rep.stationarity_residual = std::max(0.0, stat);

  // complementary slackness on flow limits
  double comp = 0.0;
  for (int e = 0; e < m_edges; ++e) {
    const double fmax = problem.grid.edges[e].flow_limit;
    comp = std::max(comp, std::abs(solution.mu_upper[e] * (fmax - flows[e])));
    comp = std::max(comp, std::abs(solution.mu_lower[e] * (flows[e] + fmax)));
  }
  rep.complementarity_residual = comp;

  rep.primal_ok = rep.primal_residual <= tolerance;
  rep.dual_ok = rep.dual_residual <= tolerance;
  rep.stationarity_ok = rep.stationarity_residual <= tolerance;
  rep.complementarity_ok = rep.complementarity_residual <= tolerance;
  return rep;
}

KktReport verify_kkt(const DcOpfProblem& problem, const DcOpfSolution& solution,
                     double tolerance) {
  return verify_kkt(problem, solution, tolerance, build_isf(problem.grid));
}

}  // namespace lmplab
