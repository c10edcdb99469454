#include "lmplab/baseproblem.hpp"

#include "lmplab/rng.hpp"

namespace lmplab {

DcOpfProblem make_base_problem(const Grid& grid, std::uint64_t seed) {
  grid.validate();
  const int n = grid.n_nodes;
  Rng rng(seed);

  DcOpfProblem p;
  p.grid = grid;
  p.cost_a = Eigen::VectorXd::Zero(n);
  p.cost_b = Eigen::VectorXd::Zero(n);
  p.p_min = Eigen::VectorXd::Zero(n);
  p.p_max = Eigen::VectorXd::Zero(n);

  std::vector<char> is_gen(n, 0);
  for (int i = 0; i < n; ++i) is_gen[i] = rng.uniform() < 0.45 ? 1 : 0;
  // need at least one of each role
  if (std::count(is_gen.begin(), is_gen.end(), 1) == 0) is_gen[0] = 1;
  if (std::count(is_gen.begin(), is_gen.end(), 1) == n) is_gen[n - 1] = 0;

  double total_load = 0.0;
  double total_cap = 0.0;
  for (int i = 0; i < n; ++i) {
    if (is_gen[i]) {
      p.cost_a[i] = rng.uniform(0.1, 1.0);
      p.cost_b[i] = rng.uniform(0.5, 2.0);
      p.p_min[i] = 0.0;
      p.p_max[i] = rng.uniform(1.0, 3.0);
      total_cap += p.p_max[i];
    } else {
      const double load = rng.uniform(0.5, 1.5);
      p.p_min[i] = -load;
      p.p_max[i] = -load;
      total_load += load;
    }
  }
  // headroom so jittered instances stay balance-feasible
  const double scale = 1.6 * total_load / total_cap;
  for (int i = 0; i < n; ++i)
    if (is_gen[i]) p.p_max[i] *= scale;
  return p;
}

}  // namespace lmplab
