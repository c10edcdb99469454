#include "lmplab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <Eigen/Cholesky>

#include "lmplab/jsonio.hpp"
#include "lmplab/rng.hpp"

namespace lmplab {

bool is_connected(int n_nodes, const std::vector<GridEdge>& edges) {
  if (n_nodes <= 0) return false;
  std::vector<std::vector<int>> adj(n_nodes);
  for (const auto& e : edges) {
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  std::vector<char> seen(n_nodes, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == n_nodes;
}

void Grid::validate() const {
  if (n_nodes < 1) throw InvalidConfigError("grid needs at least one node");
  if (reference_node < 0 || reference_node >= n_nodes)
    throw InvalidConfigError("reference node out of range");
  std::set<std::pair<int, int>> seen;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    std::ostringstream where;
    where << "edge " << k << " (" << e.from << "," << e.to << ")";
    if (e.from < 0 || e.to < 0 || e.from >= n_nodes || e.to >= n_nodes)
      throw InvalidConfigError(where.str() + ": node id out of range");
    if (e.from == e.to)
      throw InvalidConfigError(where.str() + ": self-loop");
    if (e.from > e.to)
      throw InvalidConfigError(where.str() + ": endpoints must satisfy from < to");
    if (!seen.insert({e.from, e.to}).second)
      throw InvalidConfigError(where.str() + ": duplicate line");
    if (!(e.reactance > 0.0))
      throw InvalidConfigError(where.str() + ": reactance must be > 0");
    if (!(e.flow_limit > 0.0))
      throw InvalidConfigError(where.str() + ": flow limit must be > 0");
  }
  if (!is_connected(n_nodes, edges))
    throw InvalidConfigError("grid is disconnected");
}

Eigen::MatrixXd build_incidence(const Grid& grid) {
  const int m = grid.n_edges();
  const int n = grid.n_nodes;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n - 1);
  for (int e = 0; e < m; ++e) {
    const auto& ed = grid.edges[e];
    if (ed.from != grid.reference_node) a(e, grid.reduced_column(ed.from)) = 1.0;
    if (ed.to != grid.reference_node) a(e, grid.reduced_column(ed.to)) = -1.0;
  }
  return a;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_reduced_laplacian(const Eigen::MatrixXd& br) {
  Eigen::LLT<Eigen::MatrixXd> llt(br);
  if (llt.info() != Eigen::Success)
    throw SingularLaplacianError(
        "reduced Laplacian factorization failed; grid is disconnected");
  return llt;
}

}  // namespace

Eigen::MatrixXd reduced_laplacian(const Grid& grid) {
  const Eigen::MatrixXd a = build_incidence(grid);
  Eigen::VectorXd inv_x(grid.n_edges());
  for (int e = 0; e < grid.n_edges(); ++e) inv_x[e] = 1.0 / grid.edges[e].reactance;
  Eigen::MatrixXd br = a.transpose() * inv_x.asDiagonal() * a;
  factor_reduced_laplacian(br);  // connectivity check
  return br;
}

IsfMatrix build_isf(const Grid& grid) {
  const int m = grid.n_edges();
  const int n = grid.n_nodes;
  const Eigen::MatrixXd a = build_incidence(grid);
  Eigen::VectorXd inv_x(m);
  for (int e = 0; e < m; ++e) inv_x[e] = 1.0 / grid.edges[e].reactance;
  Eigen::MatrixXd br = a.transpose() * inv_x.asDiagonal() * a;
  auto llt = factor_reduced_laplacian(br);
  // S^T (reference column removed) = B_r^-1 A_r^T X^-1
  Eigen::MatrixXd rhs = a.transpose() * inv_x.asDiagonal();
  Eigen::MatrixXd st = llt.solve(rhs);
  IsfMatrix isf;
  isf.reference_node = grid.reference_node;
  isf.values = Eigen::MatrixXd::Zero(m, n);
  for (int node = 0; node < n; ++node) {
    if (node == grid.reference_node) continue;
    isf.values.col(node) = st.row(grid.reduced_column(node)).transpose();
  }
  return isf;
}

Grid generate_synthetic_grid(int n, double avg_degree, double limit_scale,
                             std::uint64_t seed) {
  if (n < 2) throw InvalidConfigError("synthetic grid needs n >= 2");
  if (avg_degree * n / 2.0 < n - 1)
    throw InvalidConfigError("avg_degree too small for a spanning tree");
  const long max_edges = static_cast<long>(n) * (n - 1) / 2;
  long target = static_cast<long>(std::ceil(avg_degree * n / 2.0));
  target = std::min(target, max_edges);

  Rng rng(seed);
  std::set<std::pair<int, int>> used;
  Grid grid;
  grid.n_nodes = n;
  grid.reference_node = 0;

  // random spanning tree: attach each node to a random earlier one
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  for (int i = 1; i < n; ++i) {
    int u = order[i];
    int v = order[rng.uniform_int(0, i - 1)];
    auto key = std::minmax(u, v);
    used.insert(key);
    grid.edges.push_back({key.first, key.second, 0.0, 0.0});
  }
  while (static_cast<long>(grid.edges.size()) < target) {
    int u = rng.uniform_int(0, n - 1);
    int v = rng.uniform_int(0, n - 1);
    if (u == v) continue;
    auto key = std::minmax(u, v);
    if (!used.insert(key).second) continue;
    grid.edges.push_back({key.first, key.second, 0.0, 0.0});
  }
  for (auto& e : grid.edges) {
    e.reactance = rng.uniform(0.5, 2.0);
    e.flow_limit = rng.uniform(0.5, 1.5) * limit_scale;
  }
  grid.validate();
  return grid;
}

Grid remove_lines(const Grid& grid, const std::vector<int>& edge_indices) {
  std::set<int> drop;
  for (int idx : edge_indices) {
    if (idx < 0 || idx >= grid.n_edges())
      throw InvalidConfigError("edge index out of range: " + std::to_string(idx));
    if (!drop.insert(idx).second)
      throw InvalidConfigError("duplicate edge index: " + std::to_string(idx));
  }
  Grid out;
  out.n_nodes = grid.n_nodes;
  out.reference_node = grid.reference_node;
  for (int e = 0; e < grid.n_edges(); ++e)
    if (!drop.count(e)) out.edges.push_back(grid.edges[e]);
  if (!is_connected(out.n_nodes, out.edges))
    throw WouldDisconnectError("removing the given lines disconnects the grid");
  return out;
}

std::string case_text(const Grid& grid) {
  std::string out = "gridcase 1 " + std::to_string(grid.n_nodes) + " " +
                    std::to_string(grid.n_edges()) + " " +
                    std::to_string(grid.reference_node) + "\n";
  for (const auto& e : grid.edges) {
    out += "edge " + std::to_string(e.from) + " " + std::to_string(e.to) + " " +
           fmt_real(e.reactance) + " " + fmt_real(e.flow_limit) + "\n";
  }
  return out;
}

std::string grid_hash(const Grid& grid) { return hex64(fnv1a64(case_text(grid))); }

void write_case(const Grid& grid, const std::string& path) {
  write_text_file(path, case_text(grid));
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Grid read_case(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  int lineno = 0;
  Grid grid;
  int n_edges = -1;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string trimmed = line.substr(0, line.find('#'));
    std::istringstream ls(trimmed);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank or comment
    if (!have_header) {
      if (tok != "gridcase") parse_fail(path, lineno, "expected 'gridcase' header");
      int version = 0;
      if (!(ls >> version >> grid.n_nodes >> n_edges >> grid.reference_node))
        parse_fail(path, lineno, "malformed header fields");
      if (version != 1) parse_fail(path, lineno, "unsupported case version");
      if (grid.n_nodes < 1) parse_fail(path, lineno, "node count must be >= 1");
      if (n_edges < 0) parse_fail(path, lineno, "negative edge count");
      have_header = true;
      continue;
    }
    if (tok != "edge") parse_fail(path, lineno, "expected 'edge' record, got '" + tok + "'");
    GridEdge e;
    if (!(ls >> e.from >> e.to >> e.reactance >> e.flow_limit))
      parse_fail(path, lineno, "malformed edge fields");
    std::string extra;
    if (ls >> extra) parse_fail(path, lineno, "trailing tokens on edge line");
    grid.edges.push_back(e);
  }
  if (!have_header) throw ParseError(path + ": empty case file");
  if (grid.n_edges() != n_edges)
    throw ParseError(path + ": header announces " + std::to_string(n_edges) +
                     " edges but " + std::to_string(grid.n_edges()) + " present");
  try {
    grid.validate();
  } catch (const InvalidConfigError& err) {
    throw ParseError(path + ": " + err.what());
  }
  return grid;
}

}  // namespace lmplab
