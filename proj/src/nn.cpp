#include "lmplab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <nlohmann/json.hpp>

#include "lmplab/errors.hpp"
#include "lmplab/jsonio.hpp"
#include "lmplab/rng.hpp"

namespace lmplab {

using nlohmann::json;
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMajorMatrix>;
using ConstMapRM = Eigen::Map<const RowMajorMatrix>;

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Gnn: return "gnn";
    case ModelKind::Fcnn: return "fcnn";
    case ModelKind::Gidnn: return "gidnn";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "gnn") return ModelKind::Gnn;
  if (name == "fcnn") return ModelKind::Fcnn;
  if (name == "gidnn") return ModelKind::Gidnn;
  throw ParseError("unknown model kind: " + name);
}

// ---------------------------------------------------------------- filter

SparseFilter SparseFilter::from_grid(const Grid& grid) {
  SparseFilter f;
  f.n_nodes = grid.n_nodes;
  for (const auto& e : grid.edges) f.edges.emplace_back(e.from, e.to);

  // triplets (row, col, flat value slot); flat order: self loops first,
  // then both directions of each edge
  std::vector<std::tuple<int, int, int>> entries;
  entries.reserve(f.nnz());
  for (int i = 0; i < f.n_nodes; ++i) entries.emplace_back(i, i, i);
  for (int e = 0; e < static_cast<int>(f.edges.size()); ++e) {
    entries.emplace_back(f.edges[e].first, f.edges[e].second, f.n_nodes + 2 * e);
    entries.emplace_back(f.edges[e].second, f.edges[e].first, f.n_nodes + 2 * e + 1);
  }
  std::sort(entries.begin(), entries.end());

  f.row_ptr.assign(f.n_nodes + 1, 0);
  for (const auto& [r, c, v] : entries) f.row_ptr[r + 1]++;
  for (int i = 0; i < f.n_nodes; ++i) f.row_ptr[i + 1] += f.row_ptr[i];
  f.cols.resize(entries.size());
  f.val_index.resize(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    f.cols[k] = std::get<1>(entries[k]);
    f.val_index[k] = std::get<2>(entries[k]);
  }
  return f;
}

Eigen::VectorXd SparseFilter::normalized_adjacency_values(const Grid& grid) const {
  std::vector<double> degree(n_nodes, 0.0);
  for (const auto& [u, v] : edges) {
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  Eigen::VectorXd vals(nnz());
  for (int i = 0; i < n_nodes; ++i) vals[i] = 1.0 / (degree[i] + 1.0);
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    const auto& [u, v] = edges[e];
    const double w = 1.0 / std::sqrt((degree[u] + 1.0) * (degree[v] + 1.0));
    vals[n_nodes + 2 * e] = w;
    vals[n_nodes + 2 * e + 1] = w;
  }
  (void)grid;
  return vals;
}

void SparseFilter::apply(const double* values, const Eigen::MatrixXd& x,
                         Eigen::MatrixXd& y) const {
  y.setZero(n_nodes, x.cols());
  for (int r = 0; r < n_nodes; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      y.row(r) += values[val_index[k]] * x.row(cols[k]);
}

void SparseFilter::apply_transposed(const double* values, const Eigen::MatrixXd& x,
                                    Eigen::MatrixXd& y) const {
  // W^T has the same symmetric pattern; entry (r,c) of W^T reads the
  // value of (c,r), i.e. the partner slot for edge entries.
  y.setZero(n_nodes, x.cols());
  for (int r = 0; r < n_nodes; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      int v = val_index[k];
      if (v >= n_nodes) v = ((v - n_nodes) ^ 1) + n_nodes;  // swap direction
      y.row(r) += values[v] * x.row(cols[k]);
    }
}

void SparseFilter::accumulate_pattern_grad(const Eigen::MatrixXd& t,
                                           const Eigen::MatrixXd& zprev,
                                           double* grad) const {
  for (int r = 0; r < n_nodes; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      grad[val_index[k]] += t.row(r).dot(zprev.row(cols[k]));
}

// ----------------------------------------------------------------- model

long count_parameters(ModelKind kind, const std::vector<int>& dims, int n_nodes,
                      int n_edges, int filter_order) {
  if (dims.size() < 2) throw InvalidConfigError("dims needs at least two entries");
  const long pattern = static_cast<long>(n_nodes) + 2L * n_edges;
  long total = 0;
  for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
    const long din = dims[t], dout = dims[t + 1];
    switch (kind) {
      case ModelKind::Gnn:
        total += (filter_order + 1L) * din * dout + dout;
        break;
      case ModelKind::Fcnn:
        total += din * dout + dout;
        break;
      case ModelKind::Gidnn:
        total += pattern * din * dout + static_cast<long>(n_nodes) * dout;
        break;
    }
  }
  if (kind == ModelKind::Gnn) total += pattern;  // shared filter, once per model
  return total;
}

long count_parameters(ModelKind kind, const std::vector<int>& dims,
                      const Grid& grid, int filter_order) {
  return count_parameters(kind, dims, grid.n_nodes, grid.n_edges(), filter_order);
}

std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> gidnn_mask(
    const Grid& grid, const std::vector<int>& layer_dims) {
  const int n = grid.n_nodes;
  for (int dim : layer_dims)
    if (dim <= 0 || dim % n != 0)
      throw InvalidBlockingError("layer width " + std::to_string(dim) +
                                 " does not divide into " + std::to_string(n) +
                                 " node blocks");
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(n, n);
  mask.setConstant(false);
  for (int i = 0; i < n; ++i) mask(i, i) = true;
  for (const auto& e : grid.edges) {
    mask(e.from, e.to) = true;
    mask(e.to, e.from) = true;
  }
  std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> out;
  for (std::size_t t = 0; t + 1 < layer_dims.size(); ++t) out.push_back(mask);
  return out;
}

void Model::build_layout() {
  const int n_layers = static_cast<int>(dims_.size()) - 1;
  const int pattern = filter_.nnz();
  weight_offset_.assign(n_layers, 0);
  bias_offset_.assign(n_layers, 0);
  long cursor = kind_ == ModelKind::Gnn ? pattern : 0;
  for (int t = 0; t < n_layers; ++t) {
    weight_offset_[t] = static_cast<int>(cursor);
    switch (kind_) {
      case ModelKind::Gnn:
        cursor += static_cast<long>(order_ + 1) * dims_[t] * dims_[t + 1];
        break;
      case ModelKind::Fcnn:
        cursor += static_cast<long>(dims_[t]) * dims_[t + 1];
        break;
      case ModelKind::Gidnn:
        cursor += static_cast<long>(pattern) * dims_[t] * dims_[t + 1];
        break;
    }
  }
  for (int t = 0; t < n_layers; ++t) {
    bias_offset_[t] = static_cast<int>(cursor);
    cursor += kind_ == ModelKind::Gidnn
                  ? static_cast<long>(filter_.n_nodes) * dims_[t + 1]
                  : dims_[t + 1];
  }
  params_.assign(cursor, 0.0);
}

Model::Model(const Grid& grid, const ModelConfig& config, std::uint64_t seed)
    : kind_(config.kind), dims_(config.dims) {
  grid.validate();
  if (dims_.size() < 2) throw InvalidConfigError("model needs at least one layer");
  if (kind_ == ModelKind::Gnn) {
    if (config.filter_order < 1)
      throw InvalidConfigError("graph filter order must be >= 1");
    order_ = config.filter_order;
  } else {
    order_ = 0;
  }
  if (kind_ != ModelKind::Fcnn && dims_.back() != 1)
    throw InvalidConfigError("per-node output width must be 1");
  if (kind_ == ModelKind::Fcnn && dims_.back() != grid.n_nodes)
    throw InvalidConfigError("fcnn output width must equal the node count");
  for (int d : dims_)
    if (d < 1) throw InvalidConfigError("layer widths must be positive");

  grid_hash_ = lmplab::grid_hash(grid);
  filter_ = SparseFilter::from_grid(grid);
  build_layout();

  Rng rng(seed);
  if (kind_ == ModelKind::Gnn) {
    const Eigen::VectorXd w0 = filter_.normalized_adjacency_values(grid);
    for (int i = 0; i < w0.size(); ++i) params_[i] = w0[i];
  }
  std::vector<double> degree(grid.n_nodes, 0.0);
  for (const auto& e : grid.edges) {
    degree[e.from] += 1.0;
    degree[e.to] += 1.0;
  }
  const int n_layers = this->n_layers();
  for (int t = 0; t < n_layers; ++t) {
    const int din = dims_[t], dout = dims_[t + 1];
    double* w = params_.data() + weight_offset_[t];
    switch (kind_) {
      case ModelKind::Gnn: {
        const double s = std::sqrt(6.0 / ((order_ + 1.0) * din + dout));
        const long count = static_cast<long>(order_ + 1) * din * dout;
        for (long i = 0; i < count; ++i) w[i] = rng.uniform(-s, s);
        break;
      }
      case ModelKind::Fcnn: {
        const double s = std::sqrt(6.0 / (static_cast<double>(din) + dout));
        const long count = static_cast<long>(din) * dout;
        for (long i = 0; i < count; ++i) w[i] = rng.uniform(-s, s);
        break;
      }
      case ModelKind::Gidnn: {
        // one block per pattern entry, scaled by the receiving node's fan-in
        const long block = static_cast<long>(din) * dout;
        for (int v = 0; v < filter_.nnz(); ++v) {
          int row_node;
          if (v < filter_.n_nodes)
            row_node = v;
          else
            row_node = (v - filter_.n_nodes) % 2 == 0
                           ? filter_.edges[(v - filter_.n_nodes) / 2].first
                           : filter_.edges[(v - filter_.n_nodes) / 2].second;
          const double fan_in = (degree[row_node] + 1.0) * din;
          const double s = std::sqrt(6.0 / (fan_in + dout));
          for (long i = 0; i < block; ++i) w[v * block + i] = rng.uniform(-s, s);
        }
        break;
      }
    }
    // biases start at zero (already zero-filled)
  }
}

namespace {

void check_finite(const Eigen::MatrixXd& m, const char* where) {
  if (!m.allFinite())
    throw NonFiniteError(std::string("non-finite activation in ") + where);
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& m) { return m.cwiseMax(0.0); }

Eigen::VectorXd flatten_node_major(const Eigen::MatrixXd& x) {
  Eigen::VectorXd v(x.rows() * x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index c = 0; c < x.cols(); ++c) v[i * x.cols() + c] = x(i, c);
  return v;
}

}  // namespace

Eigen::VectorXd Model::forward(const Eigen::MatrixXd& x, ForwardCache* cache) const {
  const int n = filter_.n_nodes;
  const int n_layers = this->n_layers();
  if (x.rows() != n) throw DimensionMismatchError("feature row count != node count");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.input = x;
  c.shifted.assign(n_layers, {});
  c.pre.assign(n_layers, {});
  c.out.assign(n_layers, {});

  if (kind_ == ModelKind::Fcnn) {
    if (x.cols() * n != dims_[0])
      throw DimensionMismatchError("fcnn input width mismatch");
    Eigen::MatrixXd cur = flatten_node_major(x);
    for (int t = 0; t < n_layers; ++t) {
      c.shifted[t] = {cur};
      ConstMapRM w(params_.data() + weight_offset_[t], dims_[t + 1], dims_[t]);
      Eigen::Map<const Eigen::VectorXd> b(params_.data() + bias_offset_[t],
                                          dims_[t + 1]);
      Eigen::MatrixXd pre = w * cur;
      pre.col(0) += b;
      c.pre[t] = pre;
      cur = t + 1 == n_layers ? pre : relu(pre);
      check_finite(cur, "fcnn layer");
      c.out[t] = cur;
    }
    return cur.col(0);
  }

  if (x.cols() != dims_[0])
    throw DimensionMismatchError("input feature width mismatch");

  Eigen::MatrixXd cur = x;
  for (int t = 0; t < n_layers; ++t) {
    const int din = dims_[t], dout = dims_[t + 1];
    Eigen::MatrixXd pre(n, dout);
    if (kind_ == ModelKind::Gnn) {
      auto& z = c.shifted[t];
      z.resize(order_ + 1);
      z[0] = cur;
      for (int k = 1; k <= order_; ++k)
        filter_.apply(params_.data(), z[k - 1], z[k]);
      Eigen::Map<const Eigen::VectorXd> b(params_.data() + bias_offset_[t], dout);
      pre = b.transpose().replicate(n, 1);
      for (int k = 0; k <= order_; ++k) {
        ConstMapRM h(params_.data() + weight_offset_[t] +
                         static_cast<long>(k) * din * dout,
                     din, dout);
        pre.noalias() += z[k] * h;
      }
    } else {  // Gidnn
      c.shifted[t] = {cur};
      const long block = static_cast<long>(din) * dout;
      const double* w = params_.data() + weight_offset_[t];
      Eigen::Map<const Eigen::VectorXd> b(params_.data() + bias_offset_[t],
                                          static_cast<long>(n) * dout);
      pre.setZero();
      for (int r = 0; r < n; ++r) {
        for (int k = filter_.row_ptr[r]; k < filter_.row_ptr[r + 1]; ++k) {
          ConstMapRM blk(w + filter_.val_index[k] * block, din, dout);
          pre.row(r).noalias() += cur.row(filter_.cols[k]) * blk;
        }
        pre.row(r) += b.segment(static_cast<long>(r) * dout, dout).transpose();
      }
    }
    c.pre[t] = pre;
    cur = t + 1 == n_layers ? pre : relu(pre);
    check_finite(cur, "layer activation");
    c.out[t] = cur;
  }
  return cur.col(0);
}

Eigen::VectorXd Model::forward(const Eigen::MatrixXd& x) const {
  return forward(x, nullptr);
}

Eigen::VectorXd Model::predict(const Eigen::MatrixXd& x_raw) const {
  if (!norm) return forward(x_raw);
  Eigen::MatrixXd x = x_raw;
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    x.col(c) = ((x.col(c).array() - norm->x_mean[c]) / norm->x_std[c]).matrix();
  Eigen::VectorXd out = forward(x);
  return (out.array() * norm->y_std + norm->y_mean).matrix();
}

void Model::backward(const ForwardCache& cache, const Eigen::VectorXd& dloss_dout,
                     std::vector<double>& grad) const {
  const int n = filter_.n_nodes;
  const int n_layers = this->n_layers();
  if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);

  Eigen::MatrixXd dout = dloss_dout;  // column
  if (!dout.allFinite()) throw NonFiniteError("non-finite upstream gradient");

  for (int t = n_layers - 1; t >= 0; --t) {
    const int din = dims_[t], dout_w = dims_[t + 1];
    // through the activation
    Eigen::MatrixXd dpre;
    if (t == n_layers - 1)
      dpre = dout;
    else
      dpre = (cache.pre[t].array() > 0.0).select(dout, 0.0);

    if (kind_ == ModelKind::Fcnn) {
      const Eigen::MatrixXd& x_t = cache.shifted[t][0];
      for (int j = 0; j < dout_w; ++j) grad[bias_offset_[t] + j] += dpre(j, 0);
      MapRM dw(grad.data() + weight_offset_[t], dout_w, din);
      dw.noalias() += dpre * x_t.transpose();
      ConstMapRM w(params_.data() + weight_offset_[t], dout_w, din);
      dout = w.transpose() * dpre;
      continue;
    }

    if (kind_ == ModelKind::Gnn) {
      const auto& z = cache.shifted[t];
      for (int j = 0; j < dout_w; ++j)
        grad[bias_offset_[t] + j] += dpre.col(j).sum();
      for (int k = 0; k <= order_; ++k) {
        MapRM dh(grad.data() + weight_offset_[t] + static_cast<long>(k) * din * dout_w,
                 din, dout_w);
        dh.noalias() += z[k].transpose() * dpre;
      }
      ConstMapRM h_top(params_.data() + weight_offset_[t] +
                           static_cast<long>(order_) * din * dout_w,
                       din, dout_w);
      Eigen::MatrixXd t_acc = dpre * h_top.transpose();
      Eigen::MatrixXd t_next;
      for (int k = order_; k >= 1; --k) {
        filter_.accumulate_pattern_grad(t_acc, z[k - 1], grad.data());
        filter_.apply_transposed(params_.data(), t_acc, t_next);
        ConstMapRM h_k(params_.data() + weight_offset_[t] +
                           static_cast<long>(k - 1) * din * dout_w,
                       din, dout_w);
        t_acc = t_next + dpre * h_k.transpose();
      }
      dout = t_acc;
      continue;
    }

    // Gidnn
    const Eigen::MatrixXd& x_t = cache.shifted[t][0];
    const long block = static_cast<long>(din) * dout_w;
    const double* w = params_.data() + weight_offset_[t];
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, din);
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < dout_w; ++j)
        grad[bias_offset_[t] + static_cast<long>(r) * dout_w + j] += dpre(r, j);
      for (int k = filter_.row_ptr[r]; k < filter_.row_ptr[r + 1]; ++k) {
        const int cidx = filter_.cols[k];
        MapRM dblk(grad.data() + weight_offset_[t] + filter_.val_index[k] * block,
                   din, dout_w);
        dblk.noalias() += x_t.row(cidx).transpose() * dpre.row(r);
        ConstMapRM blk(w + filter_.val_index[k] * block, din, dout_w);
        dx.row(cidx).noalias() += dpre.row(r) * blk.transpose();
      }
    }
    dout = dx;
  }
}

// ------------------------------------------------------------ checkpoint

void save_checkpoint(const Model& model, const std::string& path,
                     const std::string& tool_version,
                     const std::string& config_digest) {
  JsonObjectWriter w;
  w.field_string("format", "lmpnn");
  w.field_int("version", 1);
  w.field_string("kind", model_kind_name(model.kind()));
  w.field_string("grid_hash", model.grid_hash());
  std::string dims = "[";
  for (std::size_t i = 0; i < model.dims().size(); ++i) {
    if (i) dims += ",";
    dims += std::to_string(model.dims()[i]);
  }
  dims += "]";
  w.field_raw("dims", dims);
  w.field_int("K", model.filter_order());
  w.field_string("activation", "relu");
  if (model.norm) {
    Eigen::VectorXd xm = model.norm->x_mean, xs = model.norm->x_std;
    w.field_raw("x_mean", fmt_real_vector(xm));
    w.field_raw("x_std", fmt_real_vector(xs));
    w.field_real("y_mean", model.norm->y_mean);
    w.field_real("y_std", model.norm->y_std);
  }
  Eigen::Map<const Eigen::VectorXd> params(model.params().data(),
                                           model.params().size());
  w.field_raw("params", fmt_real_vector(params));
  if (!tool_version.empty()) w.field_string("tool_version", tool_version);
  if (!config_digest.empty()) w.field_string("config_digest", config_digest);
  write_text_file(path, w.str() + "\n");
}

Model load_checkpoint(const std::string& path, const Grid& grid) {
  json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw ParseError(path + ": malformed checkpoint JSON");
  try {
    if (j.at("format").get<std::string>() != "lmpnn")
      throw ParseError(path + ": not an lmpnn checkpoint");
    if (j.at("version").get<int>() != 1)
      throw ParseError(path + ": unsupported checkpoint version");
    ModelConfig cfg;
    cfg.kind = model_kind_from_name(j.at("kind").get<std::string>());
    for (const auto& d : j.at("dims")) cfg.dims.push_back(d.get<int>());
    cfg.filter_order = std::max(1, j.at("K").get<int>());

    const std::string expect = j.at("grid_hash").get<std::string>();
    if (grid_hash(grid) != expect)
      throw SchemaMismatchError(path + ": checkpoint was trained against grid " +
                                expect + ", not " + grid_hash(grid));

    Model model(grid, cfg, /*seed=*/0);
    const auto& params = j.at("params");
    if (static_cast<long>(params.size()) != model.parameter_count())
      throw ParseError(path + ": parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
      model.params()[i] = params.at(i).get<double>();

    if (j.contains("y_std")) {
      NormalizationStats st;
      st.x_mean = Eigen::VectorXd(j.at("x_mean").size());
      st.x_std = Eigen::VectorXd(j.at("x_std").size());
      for (std::size_t i = 0; i < j.at("x_mean").size(); ++i)
        st.x_mean[i] = j.at("x_mean").at(i).get<double>();
      for (std::size_t i = 0; i < j.at("x_std").size(); ++i)
        st.x_std[i] = j.at("x_std").at(i).get<double>();
      st.y_mean = j.at("y_mean").get<double>();
      st.y_std = j.at("y_std").get<double>();
      model.norm = st;
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace lmplab
