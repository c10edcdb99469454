#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmplab/errors.hpp"

namespace lmplab {

/// Transmission line, canonically oriented from < to; positive flow
/// runs from `from` to `to`.
struct GridEdge {
  int from = 0;
  int to = 0;
  double reactance = 1.0;
  double flow_limit = 1.0;
};

/// Power-grid graph with line reactances and thermal limits. A valid
/// grid is connected, simple (no self-loops or duplicate lines), every
/// edge has from < to, and reactances/limits are strictly positive.
struct Grid {
  int n_nodes = 0;
  std::vector<GridEdge> edges;
  int reference_node = 0;

  int n_edges() const { return static_cast<int>(edges.size()); }

  /// Throws InvalidConfigError describing the first violated invariant.
  void validate() const;

  /// Column index of `node` once the reference column is deleted.
  int reduced_column(int node) const {
    return node < reference_node ? node : node - 1;
  }
};

/// Injection shift factor matrix: flows = values * injections for any
/// balanced injection vector. The reference column is identically zero.
struct IsfMatrix {
  Eigen::MatrixXd values;  // |E| x N
  int reference_node = 0;
};

/// Reduced incidence matrix A_r (|E| x (N-1)): row e carries +1 at the
/// tail column and -1 at the head column, reference column removed.
Eigen::MatrixXd build_incidence(const Grid& grid);

/// Reactance-weighted reduced Laplacian B_r = A_r^T X^-1 A_r; positive
/// definite iff the grid is connected. Throws SingularLaplacianError
/// when the Cholesky factorization fails (disconnected grid).
Eigen::MatrixXd reduced_laplacian(const Grid& grid);

IsfMatrix build_isf(const Grid& grid);

/// Random connected grid: spanning tree plus chords up to
/// ceil(avg_degree*n/2) edges (capped at the simple-graph maximum),
/// reactances U[0.5,2.0], limits U[0.5,1.5]*limit_scale.
Grid generate_synthetic_grid(int n, double avg_degree, double limit_scale,
                             std::uint64_t seed);

/// Copy of `grid` without the given edges. Throws WouldDisconnectError
/// if the remainder is disconnected.
Grid remove_lines(const Grid& grid, const std::vector<int>& edge_indices);

Grid read_case(const std::string& path);
void write_case(const Grid& grid, const std::string& path);

/// Canonical case-file text (also the hashing preimage).
std::string case_text(const Grid& grid);

/// Stable digest of the grid used to key datasets and checkpoints.
std::string grid_hash(const Grid& grid);

bool is_connected(int n_nodes, const std::vector<GridEdge>& edges);

}  // namespace lmplab
