#pragma once

// Shared fixtures: the 3-node ring and the congested instance whose
// exact solution is pinned across the dcopf/training suites.

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmplab/baseproblem.hpp"
#include "lmplab/dcopf.hpp"
#include "lmplab/grid.hpp"
#include "lmplab/rng.hpp"

namespace testutil {

inline lmplab::Grid two_node_grid(double reactance = 1.0, double limit = 2.0) {
  lmplab::Grid g;
  g.n_nodes = 2;
  g.reference_node = 0;
  g.edges = {{0, 1, reactance, limit}};
  return g;
}

// ring 0-1-2 with unit reactances; limits default to loose
inline lmplab::Grid ring_grid(double lim01 = 10.0, double lim02 = 10.0,
                              double lim12 = 10.0) {
  lmplab::Grid g;
  g.n_nodes = 3;
  g.reference_node = 0;
  g.edges = {{0, 1, 1.0, lim01}, {0, 2, 1.0, lim02}, {1, 2, 1.0, lim12}};
  return g;
}

// node 0: a=0.5 gen in [0,10]; node 1: a=1 gen in [0,10]; node 2 fixed -3;
// edge (0,2) limited to 1.2 -> congested optimum with
// p* = [0.6, 2.4, -3], lambda = 0.6, mu_up(0,2) = 12.6, pi = [0.6, 4.8, 9.0]
inline lmplab::DcOpfProblem congested_three_node() {
  lmplab::DcOpfProblem p;
  p.grid = ring_grid(10.0, 1.2, 10.0);
  p.cost_a = Eigen::Vector3d(0.5, 1.0, 0.0);
  p.cost_b = Eigen::Vector3d(0.0, 0.0, 0.0);
  p.p_min = Eigen::Vector3d(0.0, 0.0, -3.0);
  p.p_max = Eigen::Vector3d(10.0, 10.0, -3.0);
  return p;
}

inline lmplab::DcOpfProblem uncongested_two_node() {
  lmplab::DcOpfProblem p;
  p.grid = two_node_grid();
  p.cost_a = Eigen::Vector2d(0.5, 0.0);
  p.cost_b = Eigen::Vector2d(0.0, 0.0);
  p.p_min = Eigen::Vector2d(0.0, -1.0);
  p.p_max = Eigen::Vector2d(2.0, -1.0);
  return p;
}

// Random small instance that is feasible by construction: flow limits
// are set just outside the flows of a random interior dispatch, which
// also makes congestion at the optimum common.
inline lmplab::DcOpfProblem random_feasible_problem(int n_nodes,
                                                    std::uint64_t seed) {
  using namespace lmplab;
  Rng rng(seed);
  Grid grid = generate_synthetic_grid(n_nodes, 2.0 + rng.uniform() * 1.0, 1.0,
                                      mix_seed(seed, 1));

  DcOpfProblem p;
  p.cost_a = Eigen::VectorXd::Zero(n_nodes);
  p.cost_b = Eigen::VectorXd::Zero(n_nodes);
  p.p_min = Eigen::VectorXd::Zero(n_nodes);
  p.p_max = Eigen::VectorXd::Zero(n_nodes);

  const int n_loads = 1 + static_cast<int>(rng.uniform_below(2));
  std::vector<int> ids(n_nodes);
  for (int i = 0; i < n_nodes; ++i) ids[i] = i;
  rng.shuffle(ids);

  double total_load = 0.0;
  for (int k = 0; k < n_loads; ++k) {
    const double load = rng.uniform(0.5, 1.5);
    p.p_min[ids[k]] = p.p_max[ids[k]] = -load;
    total_load += load;
  }
  double total_cap = 0.0;
  for (int k = n_loads; k < n_nodes; ++k) {
    p.cost_a[ids[k]] = rng.uniform(0.1, 1.0);
    p.cost_b[ids[k]] = rng.uniform(0.0, 2.0);
    p.p_max[ids[k]] = rng.uniform(0.5, 2.0);
    total_cap += p.p_max[ids[k]];
  }
  const double scale = 1.5 * total_load / total_cap;
  for (int k = n_loads; k < n_nodes; ++k) p.p_max[ids[k]] *= scale;

  // pick a random feasible dispatch and set limits just beyond its flows
  Eigen::VectorXd p0(n_nodes);
  double gen_sum = 0.0;
  for (int i = 0; i < n_nodes; ++i) {
    p0[i] = p.p_min[i] == p.p_max[i] ? p.p_min[i]
                                     : rng.uniform(0.2, 0.8) * p.p_max[i];
    if (p.p_min[i] != p.p_max[i]) gen_sum += p0[i];
  }
  for (int i = 0; i < n_nodes; ++i)
    if (p.p_min[i] != p.p_max[i]) p0[i] *= total_load / gen_sum;
  bool balanced_ok = true;
  for (int i = 0; i < n_nodes; ++i)
    if (p.p_min[i] != p.p_max[i] && p0[i] > p.p_max[i]) balanced_ok = false;

  const IsfMatrix isf = build_isf(grid);
  const Eigen::VectorXd f0 = isf.values * p0;
  for (int e = 0; e < grid.n_edges(); ++e)
    grid.edges[e].flow_limit =
        std::max(std::abs(f0[e]) * rng.uniform(1.05, 1.6), 0.05);
  p.grid = grid;
  if (!balanced_ok) return random_feasible_problem(n_nodes, mix_seed(seed, 2));
  return p;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("lmplab_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
