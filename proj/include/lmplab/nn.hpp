#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmplab/dataset.hpp"
#include "lmplab/grid.hpp"

namespace lmplab {

enum class ModelKind { Gnn, Fcnn, Gidnn };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

/// Trainable graph filter with the sparsity of adjacency-plus-diagonal:
/// one value per node self-loop and one per direction of every edge
/// (nnz = N + 2|E|). Value order is the checkpoint order: N self-loop
/// entries (node order), then (i,j),(j,i) per edge in edge-list order.
struct SparseFilter {
  int n_nodes = 0;
  std::vector<std::pair<int, int>> edges;

  // CSR over the pattern; val_index maps each stored entry to its slot
  // in the flat value order above.
  std::vector<int> row_ptr;
  std::vector<int> cols;
  std::vector<int> val_index;

  static SparseFilter from_grid(const Grid& grid);

  int nnz() const { return n_nodes + 2 * static_cast<int>(edges.size()); }

  /// Symmetrically normalized adjacency with self-loops, the default
  /// initial filter values.
  Eigen::VectorXd normalized_adjacency_values(const Grid& grid) const;

  // y = W x, y = W^T x, and the pattern-restricted gradient
  // contribution g[v] += dot(t.row(r), zprev.row(c)) for entry (r,c).
  void apply(const double* values, const Eigen::MatrixXd& x,
             Eigen::MatrixXd& y) const;
  void apply_transposed(const double* values, const Eigen::MatrixXd& x,
                        Eigen::MatrixXd& y) const;
  void accumulate_pattern_grad(const Eigen::MatrixXd& t,
                               const Eigen::MatrixXd& zprev, double* grad) const;
};

struct ModelConfig {
  ModelKind kind = ModelKind::Gnn;
  /// Full width chain including input and output. Per-node feature
  /// widths for Gnn/Gidnn (output 1); absolute layer widths for Fcnn
  /// (input N*d, output N).
  std::vector<int> dims;
  int filter_order = 2;  // K, Gnn only
};

struct ForwardCache;

/// One network with a flat parameter store. Layer stack per kind:
///   Gnn:   X_{t+1} = act(sum_{k=0..K} W^k X_t H_{t,k} + 1 b_t^T)
///   Fcnn:  x_{t+1} = act(W_t x_t + b_t) on the flattened feature vector
///   Gidnn: Fcnn with weight blocks pruned to self + adjacent nodes
/// Hidden activations are ReLU, the output layer is linear.
class Model {
 public:
  Model() = default;
  Model(const Grid& grid, const ModelConfig& config, std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  int filter_order() const { return order_; }
  const std::vector<int>& dims() const { return dims_; }
  const std::string& grid_hash() const { return grid_hash_; }
  int n_nodes() const { return filter_.n_nodes; }
  const std::vector<std::pair<int, int>>& edges() const { return filter_.edges; }
  const SparseFilter& filter() const { return filter_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  long parameter_count() const { return static_cast<long>(params_.size()); }

  /// Normalization the model was trained with; used by predict() and
  /// persisted with checkpoints.
  std::optional<NormalizationStats> norm;

  /// Forward pass on standardized features. Throws NonFiniteError if an
  /// activation is NaN/Inf.
  Eigen::VectorXd forward(const Eigen::MatrixXd& x, ForwardCache* cache) const;
  Eigen::VectorXd forward(const Eigen::MatrixXd& x) const;

  /// Raw-feature prediction in physical units via the stored stats.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x_raw) const;

  /// Exact reverse-mode gradient of a scalar loss with upstream
  /// d(loss)/d(output); the cache must come from the same input.
  void backward(const ForwardCache& cache, const Eigen::VectorXd& dloss_dout,
                std::vector<double>& grad) const;

  // flat-store layout (filter values, per-layer maps, then biases)
  int filter_value_offset() const { return 0; }
  int layer_weight_offset(int layer) const { return weight_offset_[layer]; }
  int layer_bias_offset(int layer) const { return bias_offset_[layer]; }
  int n_layers() const { return static_cast<int>(dims_.size()) - 1; }

 private:
  ModelKind kind_ = ModelKind::Gnn;
  int order_ = 1;
  std::vector<int> dims_;
  std::string grid_hash_;
  SparseFilter filter_;
  std::vector<double> params_;
  std::vector<int> weight_offset_;
  std::vector<int> bias_offset_;

  void build_layout();
};

struct ForwardCache {
  Eigen::MatrixXd input;
  // per layer: graph-shift powers W^k X_t (Gnn; index 0 is X_t itself),
  // or just {X_t} for Fcnn/Gidnn
  std::vector<std::vector<Eigen::MatrixXd>> shifted;
  std::vector<Eigen::MatrixXd> pre;  // pre-activation per layer
  std::vector<Eigen::MatrixXd> out;  // post-activation per layer
};

/// Exact parameter-count law. dims follows the ModelConfig convention.
/// Per layer: Gnn (K+1)*d_t*d_{t+1} + d_{t+1} plus one shared
/// (N + 2|E|) filter per model; Fcnn w_t*w_{t+1} + w_{t+1};
/// Gidnn (N + 2|E|)*d_t*d_{t+1} + N*d_{t+1}.
long count_parameters(ModelKind kind, const std::vector<int>& dims, int n_nodes,
                      int n_edges, int filter_order);
long count_parameters(ModelKind kind, const std::vector<int>& dims,
                      const Grid& grid, int filter_order);

/// Block trainability masks for the graph-pruned network: block (i,j)
/// of layer t is trainable iff i == j or (i,j) is a grid edge. Layer
/// dims are absolute widths and must divide into N node blocks.
std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> gidnn_mask(
    const Grid& grid, const std::vector<int>& layer_dims);

void save_checkpoint(const Model& model, const std::string& path,
                     const std::string& tool_version = "",
                     const std::string& config_digest = "");

/// Rebuilds a model from a checkpoint; the grid supplies the filter
/// pattern and must match the stored grid_hash (SchemaMismatchError).
Model load_checkpoint(const std::string& path, const Grid& grid);

}  // namespace lmplab
