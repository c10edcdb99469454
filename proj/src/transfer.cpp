#include "lmplab/transfer.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "lmplab/errors.hpp"
#include "lmplab/jsonio.hpp"
#include "lmplab/log.hpp"
#include "lmplab/rng.hpp"

namespace lmplab {

std::pair<Grid, std::vector<int>> perturb_topology(const Grid& grid, int max_lines,
                                                   std::uint64_t seed) {
  if (max_lines < 1 || max_lines > 2)
    throw InvalidConfigError("max_lines must be 1 or 2");
  grid.validate();
  if (grid.n_edges() <= grid.n_nodes - 1)
    throw NoValidPerturbationError(
        "every line of a tree grid is a bridge; nothing can be disconnected");

  Rng rng(seed);
  constexpr int kTries = 100;
  for (int attempt = 0; attempt < kTries; ++attempt) {
    const int k = rng.uniform_int(1, max_lines);
    std::vector<int> picks;
    while (static_cast<int>(picks.size()) < k) {
      const int e = rng.uniform_int(0, grid.n_edges() - 1);
      if (std::find(picks.begin(), picks.end(), e) == picks.end())
        picks.push_back(e);
    }
    std::sort(picks.begin(), picks.end());
    try {
      Grid next = remove_lines(grid, picks);
      return {std::move(next), picks};
    } catch (const WouldDisconnectError&) {
      continue;
    }
  }
  throw NoValidPerturbationError(
      "no connectivity-preserving line removal found in 100 tries");
}

Model adapt_model(const Model& model, const Grid& base_grid, const Grid& new_grid) {
  if (model.kind() != ModelKind::Gnn)
    throw InvalidConfigError("only graph-filter models adapt across topologies");
  if (model.grid_hash() != grid_hash(base_grid))
    throw IncompatibleTopologyError("model was not trained on the given base grid");
  if (new_grid.n_nodes != base_grid.n_nodes)
    throw IncompatibleTopologyError("node sets differ");
  new_grid.validate();

  // every new edge must exist in the base grid
  std::map<std::pair<int, int>, int> base_index;
  for (int e = 0; e < base_grid.n_edges(); ++e)
    base_index[{base_grid.edges[e].from, base_grid.edges[e].to}] = e;
  std::vector<int> surviving;  // base edge index per new edge
  for (const auto& e : new_grid.edges) {
    auto it = base_index.find({e.from, e.to});
    if (it == base_index.end())
      throw IncompatibleTopologyError("new grid is not an edge-subset of the base");
    surviving.push_back(it->second);
  }

  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = model.dims();
  cfg.filter_order = model.filter_order();
  Model adapted(new_grid, cfg, /*seed=*/0);
  adapted.norm = model.norm;

  const int n = base_grid.n_nodes;
  auto& dst = adapted.params();
  const auto& src = model.params();
  // self-loop filter values keep their slots
  for (int i = 0; i < n; ++i) dst[i] = src[i];
  // surviving edge values move to their new edge-list positions
  for (int e_new = 0; e_new < static_cast<int>(surviving.size()); ++e_new) {
    const int e_old = surviving[e_new];
    dst[n + 2 * e_new] = src[n + 2 * e_old];
    dst[n + 2 * e_new + 1] = src[n + 2 * e_old + 1];
  }
  // feature maps and biases are topology-independent: copy the tail
  const long src_tail = n + 2L * base_grid.n_edges();
  const long dst_tail = n + 2L * new_grid.n_edges();
  const long tail_len = static_cast<long>(src.size()) - src_tail;
  for (long i = 0; i < tail_len; ++i) dst[dst_tail + i] = src[src_tail + i];
  return adapted;
}

namespace {

std::string dataset_digest(const Dataset& ds) {
  std::string acc = ds.grid_hash;
  for (const auto& sc : ds.scenarios) {
    acc += fmt_real_vector(sc.pi);
    acc += fmt_real(sc.lambda);
  }
  return hex64(fnv1a64(acc));
}

std::vector<double> sample_l2_errors(const Model& model, const Dataset& raw) {
  std::vector<double> out;
  out.reserve(raw.scenarios.size());
  for (const auto& sc : raw.scenarios) {
    const Eigen::VectorXd pi_hat = model.predict(sc.features);
    out.push_back((pi_hat - sc.pi).norm() / std::max(sc.pi.norm(), 1e-12));
  }
  return out;
}

}  // namespace

TopologyExperiment run_transfer_experiment(const Model& model, const Grid& base_grid,
                                           std::uint64_t perturb_seed,
                                           const TransferSetup& setup,
                                           int finetune_epochs) {
  if (finetune_epochs < 1 || finetune_epochs > 10)
    throw InvalidConfigError("finetune_epochs must lie in [1, 10]");

  TopologyExperiment exp;
  exp.base_grid_hash = grid_hash(base_grid);
  exp.finetune_epochs = finetune_epochs;

  auto [new_grid, removed] = perturb_topology(base_grid, setup.max_lines, perturb_seed);
  exp.removed_edges = removed;
  exp.new_grid_hash = grid_hash(new_grid);
  log(LogLevel::Info, "transfer: removed %zu line(s), regenerating data",
      removed.size());

  // fresh labels on the perturbed topology
  DcOpfProblem problem = setup.base_problem;
  problem.grid = new_grid;
  Dataset all = sample_scenarios(new_grid, problem, setup.perturb, setup.count,
                                 setup.data_seed, setup.threads);
  auto parts = split(all, setup.splits, mix_seed(setup.data_seed, 0x5bf1));
  const Dataset& train_raw = parts[0];
  const Dataset& val_raw = parts[1];
  const Dataset& test_raw = parts[2];
  exp.test_set_digest = dataset_digest(test_raw);

  const IsfMatrix isf = build_isf(new_grid);
  const auto test_problems = problems_from_dataset(new_grid, test_raw);

  // (a) warm-started model, untouched
  Model adapted = adapt_model(model, base_grid, new_grid);
  exp.pretrained = evaluate(adapted, test_raw, test_problems, isf, setup.threads);
  exp.pretrained_sample_l2 = sample_l2_errors(adapted, test_raw);

  // (b) fine-tune for a fixed, small epoch budget; normalization stays
  // the one the model was trained with so the warm start is consistent
  if (!adapted.norm)
    throw InvalidConfigError("pretrained model carries no normalization stats");
  Dataset train_ft = normalize(train_raw, adapted.norm);
  Dataset val_ft = normalize(val_raw, adapted.norm);
  TrainConfig ft_cfg = setup.train;
  ft_cfg.max_epochs = finetune_epochs;
  ft_cfg.early_stopping = false;
  ft_cfg.threads = setup.threads;
  train(adapted, train_ft, val_ft, new_grid, ft_cfg);
  exp.finetuned = evaluate(adapted, test_raw, test_problems, isf, setup.threads);
  exp.finetuned.epochs_run = finetune_epochs;
  exp.finetuned_sample_l2 = sample_l2_errors(adapted, test_raw);

  // (c) from-scratch reference on the new topology
  Model scratch(new_grid, setup.scratch_config, setup.scratch_model_seed);
  Dataset train_sc = normalize(train_raw);
  Dataset val_sc = normalize(val_raw, train_sc.stats);
  TrainConfig sc_cfg = setup.train;
  sc_cfg.threads = setup.threads;
  const TrainResult sc_res = train(scratch, train_sc, val_sc, new_grid, sc_cfg);
  exp.scratch = evaluate(scratch, test_raw, test_problems, isf, setup.threads);
  exp.scratch.epochs_run = sc_res.epochs_run;
  return exp;
}

}  // namespace lmplab
