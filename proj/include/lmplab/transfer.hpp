#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lmplab/dataset.hpp"
#include "lmplab/nn.hpp"
#include "lmplab/training.hpp"

namespace lmplab {

/// One topology-adaptivity run: metrics of the warm-started model before
/// and after fine-tuning, against a from-scratch reference, all on the
/// same perturbed-topology test set.
struct TopologyExperiment {
  std::string base_grid_hash;
  std::string new_grid_hash;
  std::string test_set_digest;  // asserts all three metrics share one test set
  std::vector<int> removed_edges;
  MetricsReport pretrained;
  MetricsReport finetuned;
  MetricsReport scratch;
  int finetune_epochs = 0;
  std::vector<double> pretrained_sample_l2;  // per-sample errors for histograms
  std::vector<double> finetuned_sample_l2;
};

/// Disconnects 1..max_lines random non-bridge lines (rejection sampling,
/// 100 tries). Throws NoValidPerturbationError when every candidate
/// disconnects the grid (tree grids fail immediately).
std::pair<Grid, std::vector<int>> perturb_topology(const Grid& grid, int max_lines,
                                                   std::uint64_t seed);

/// Transfers GNN parameters onto an edge-subset topology: filter entries
/// of removed edges are dropped, everything else is copied verbatim.
Model adapt_model(const Model& model, const Grid& base_grid, const Grid& new_grid);

struct TransferSetup {
  DcOpfProblem base_problem;  // node data; rebound to the perturbed grid
  PerturbSpec perturb;
  int count = 2000;
  std::array<double, 3> splits{0.8, 0.1, 0.1};
  std::uint64_t data_seed = 0;
  std::uint64_t scratch_model_seed = 0;
  TrainConfig train;  // scratch reference; fine-tune reuses it with a
                      // fixed epoch budget and no early stopping
  ModelConfig scratch_config;
  int max_lines = 2;
  int threads = 1;
};

TopologyExperiment run_transfer_experiment(const Model& model, const Grid& base_grid,
                                           std::uint64_t perturb_seed,
                                           const TransferSetup& setup,
                                           int finetune_epochs);

}  // namespace lmplab
