// Serial-vs-OpenMP timing for the three batch kernels: scenario
// labeling, training epochs, and evaluation. The parallel paths reduce
// in index order, so besides the speedup this also cross-checks that
// both paths report identical numbers.

#include <omp.h>

#include <chrono>
#include <cstdio>

#include <Eigen/Core>

#include "lmplab/baseproblem.hpp"
#include "lmplab/dataset.hpp"
#include "lmplab/grid.hpp"
#include "lmplab/training.hpp"

using namespace lmplab;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct BenchSetup {
  Grid grid;
  DcOpfProblem base;
  Dataset train_norm, val_norm, raw;
  std::vector<DcOpfProblem> problems;
  IsfMatrix isf;
};

BenchSetup make_setup(int n_nodes, int count) {
  BenchSetup s;
  s.grid = generate_synthetic_grid(n_nodes, 2.5, 3.5, 42);
  s.base = make_base_problem(s.grid, 7);
  s.isf = build_isf(s.grid);
  s.raw = sample_scenarios(s.grid, s.base, PerturbSpec{}, count, 11, 0);
  auto parts = split(s.raw, {0.8, 0.1, 0.1}, 3);
  // evaluation reuses the full set; training sees the 80% split
  s.train_norm = normalize(parts[0]);
  s.val_norm = normalize(parts[1], s.train_norm.stats);
  s.problems = problems_from_dataset(s.grid, s.raw);
  return s;
}

double bench_sampling(const BenchSetup& s, int count, int threads) {
  const auto t0 = Clock::now();
  const Dataset ds =
      sample_scenarios(s.grid, s.base, PerturbSpec{}, count, 99, threads);
  const double dt = seconds_since(t0);
  std::printf("  sample_scenarios x%-5d threads=%d  %7.3f s  (congested %.2f)\n",
              count, threads, dt, ds.congested_fraction());
  return dt;
}

double bench_training(const BenchSetup& s, int epochs, int threads,
                      double* loss_out) {
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {4, 32, 32, 1};
  cfg.filter_order = 2;
  Model model(s.grid, cfg, 5);
  TrainConfig tc;
  tc.max_epochs = epochs;
  tc.patience = epochs;
  tc.seed = 21;
  tc.threads = threads;
  const auto t0 = Clock::now();
  const TrainResult res = train(model, s.train_norm, s.val_norm, s.grid, tc);
  const double dt = seconds_since(t0);
  std::printf("  train %d epochs       threads=%d  %7.3f s  (val %.6f)\n", epochs,
              threads, dt, res.history.back().val_loss);
  if (loss_out) *loss_out = res.history.back().val_loss;
  return dt;
}

double bench_eval(const BenchSetup& s, int threads, double* nl2_out) {
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {4, 32, 32, 1};
  cfg.filter_order = 2;
  Model model(s.grid, cfg, 5);
  model.norm = s.train_norm.stats;
  const auto t0 = Clock::now();
  const MetricsReport rep = evaluate(model, s.raw, s.problems, s.isf, threads);
  const double dt = seconds_since(t0);
  std::printf("  evaluate x%-5d      threads=%d  %7.3f s  (nl2 %.6f)\n",
              s.raw.count(), threads, dt, rep.normalized_l2);
  if (nl2_out) *nl2_out = rep.normalized_l2;
  return dt;
}

}  // namespace

int main(int argc, char** argv) {
  Eigen::setNbThreads(1);
  int n_nodes = 30, count = 1000, epochs = 5;
  if (argc > 1) n_nodes = std::atoi(argv[1]);
  if (argc > 2) count = std::atoi(argv[2]);
  if (argc > 3) epochs = std::atoi(argv[3]);
  const int max_threads = omp_get_max_threads();

  std::printf("bench: %d-node grid, %d scenarios, %d hardware threads\n", n_nodes,
              count, max_threads);
  const BenchSetup s = make_setup(n_nodes, count);

  std::printf("scenario labeling\n");
  const double t_s1 = bench_sampling(s, count, 1);
  const double t_sp = bench_sampling(s, count, max_threads);

  std::printf("training\n");
  double loss1 = 0.0, lossp = 0.0;
  const double t_t1 = bench_training(s, epochs, 1, &loss1);
  const double t_tp = bench_training(s, epochs, max_threads, &lossp);

  std::printf("evaluation\n");
  double nl21 = 0.0, nl2p = 0.0;
  const double t_e1 = bench_eval(s, 1, &nl21);
  const double t_ep = bench_eval(s, max_threads, &nl2p);

  std::printf("speedup: sampling %.2fx, training %.2fx, evaluation %.2fx\n",
              t_s1 / t_sp, t_t1 / t_tp, t_e1 / t_ep);
  const bool bitwise = loss1 == lossp && nl21 == nl2p;
  std::printf("serial/parallel results bitwise identical: %s\n",
              bitwise ? "yes" : "NO");
  return bitwise ? 0 : 1;
}
