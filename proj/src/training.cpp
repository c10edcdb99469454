#include "lmplab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lmplab/errors.hpp"
#include "lmplab/jsonio.hpp"
#include "lmplab/log.hpp"
#include "lmplab/parallel.hpp"
#include "lmplab/rng.hpp"

namespace lmplab {

RecoveredInjections recover_injections(const Eigen::VectorXd& pi_hat,
                                       const DcOpfProblem& problem,
                                       double tie_eps) {
  const int n = problem.grid.n_nodes;
  if (pi_hat.size() != n)
    throw DimensionMismatchError("price vector length != node count");
  if (tie_eps <= 0.0) throw InvalidConfigError("tie_eps must be > 0");
  RecoveredInjections out;
  out.p.resize(n);
  out.degenerate.assign(n, false);
  for (int i = 0; i < n; ++i) {
    const double lo = problem.p_min[i], hi = problem.p_max[i];
    if (lo == hi) {
      out.p[i] = lo;  // fixed injection
      continue;
    }
    const double a = problem.cost_a[i], b = problem.cost_b[i];
    if (a > 0.0) {
      out.p[i] = std::clamp((pi_hat[i] - b) / (2.0 * a), lo, hi);
    } else if (pi_hat[i] > b + tie_eps) {
      out.p[i] = hi;
    } else if (pi_hat[i] < b - tie_eps) {
      out.p[i] = lo;
    } else {
      out.p[i] = 0.5 * (lo + hi);
      out.degenerate[i] = true;
    }
  }
  return out;
}

namespace {

struct PenaltyResult {
  double value = 0.0;
  Eigen::VectorXd grad;  // d(penalty)/d(pi_hat), physical units
};

// || relu(|S p_hat(pi_hat)| - fmax) ||_1 and its subgradient; zero at
// clamp and violation kinks, 1/(2a) through interior quadratic nodes.
PenaltyResult flow_violation_penalty(const Eigen::VectorXd& pi_hat,
                                     const DcOpfProblem& problem,
                                     const IsfMatrix& isf) {
  const int n = problem.grid.n_nodes;
  const int m = problem.grid.n_edges();
  const auto rec = recover_injections(pi_hat, problem);
  const Eigen::VectorXd flows = isf.values * rec.p;

  PenaltyResult res;
  res.grad = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd dpen_dflow = Eigen::VectorXd::Zero(m);
  for (int e = 0; e < m; ++e) {
    const double excess = std::abs(flows[e]) - problem.grid.edges[e].flow_limit;
    if (excess > 0.0) {
      res.value += excess;
      dpen_dflow[e] = flows[e] > 0.0 ? 1.0 : -1.0;
    }
  }
  if (res.value == 0.0) return res;

  const Eigen::VectorXd dpen_dp = isf.values.transpose() * dpen_dflow;
  for (int i = 0; i < n; ++i) {
    const double lo = problem.p_min[i], hi = problem.p_max[i];
    if (lo == hi || problem.cost_a[i] <= 0.0) continue;  // clamped or flat
    if (rec.p[i] > lo && rec.p[i] < hi)
      res.grad[i] = dpen_dp[i] / (2.0 * problem.cost_a[i]);
  }
  return res;
}

}  // namespace

FrLossResult fr_loss(const Eigen::VectorXd& pi_hat, const Eigen::VectorXd& pi,
                     const DcOpfProblem& problem, const IsfMatrix& isf,
                     double lambda_reg) {
  if (pi_hat.size() != pi.size())
    throw DimensionMismatchError("prediction/label length mismatch");
  FrLossResult out;
  const Eigen::VectorXd diff = pi_hat - pi;
  out.loss = diff.squaredNorm();
  out.grad = 2.0 * diff;
  if (lambda_reg != 0.0) {
    const auto pen = flow_violation_penalty(pi_hat, problem, isf);
    out.loss += lambda_reg * pen.value;
    out.grad += lambda_reg * pen.grad;
  }
  return out;
}

namespace {

// Order-invariant sum: sorting makes the reduction a function of the
// multiset of addends only.
double stable_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

double stable_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  return stable_sum(std::move(values)) / n;
}

struct SampleEval {
  double nl2 = 0.0;
  double violation = 0.0;
  bool feasible = true;
};

SampleEval eval_sample(const Eigen::VectorXd& pi_hat, const Scenario& sc,
                       const DcOpfProblem& problem, const IsfMatrix& isf,
                       double total_limit) {
  SampleEval ev;
  const double denom = std::max(sc.pi.norm(), 1e-12);
  ev.nl2 = (pi_hat - sc.pi).norm() / denom;
  const auto rec = recover_injections(pi_hat, problem);
  const Eigen::VectorXd flows = isf.values * rec.p;
  double viol = 0.0;
  for (Eigen::Index e = 0; e < flows.size(); ++e)
    viol += std::max(0.0, std::abs(flows[e]) - problem.grid.edges[e].flow_limit);
  ev.violation = viol / total_limit;
  // flows that sit numerically on the limit count as feasible
  ev.feasible = viol <= 1e-9 * total_limit;
  return ev;
}

}  // namespace

std::vector<DcOpfProblem> problems_from_dataset(const Grid& grid,
                                                const Dataset& raw) {
  if (raw.stats)
    throw InvalidConfigError("problems_from_dataset expects a raw dataset");
  std::vector<DcOpfProblem> out;
  out.reserve(raw.scenarios.size());
  for (const auto& sc : raw.scenarios)
    out.push_back(problem_from_scenario(grid, raw.schema, sc.features));
  return out;
}

MetricsReport evaluate(const PredictFn& predict_physical, const Dataset& raw,
                       const std::vector<DcOpfProblem>& problems,
                       const IsfMatrix& isf, int threads) {
  if (raw.stats) throw InvalidConfigError("evaluate expects a raw dataset");
  const int count = raw.count();
  if (static_cast<int>(problems.size()) != count)
    throw DimensionMismatchError("need one problem per scenario");

  double total_limit = 0.0;
  if (count > 0)
    for (const auto& e : problems[0].grid.edges) total_limit += e.flow_limit;

  std::vector<SampleEval> evs(count);
  std::vector<std::exception_ptr> errors(count);
  parallel_for(count, threads, [&](int i) {
    try {
      const Eigen::VectorXd pi_hat = predict_physical(raw.scenarios[i].features);
      evs[i] = eval_sample(pi_hat, raw.scenarios[i], problems[i], isf, total_limit);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (int i = 0; i < count; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);

  std::vector<double> nl2(count), viol(count), feas(count);
  for (int i = 0; i < count; ++i) {
    nl2[i] = evs[i].nl2;
    viol[i] = evs[i].violation;
    feas[i] = evs[i].feasible ? 1.0 : 0.0;
  }
  MetricsReport rep;
  rep.normalized_l2 = stable_mean(nl2);
  double rate = stable_mean(viol);
  if (rate > 1.0) {
    rep.violation_clipped = true;
    rate = 1.0;
  }
  rep.violation_rate = rate;
  rep.feasibility_ratio = 1.0 - rate;
  rep.sample_feasible_fraction = stable_mean(feas);
  return rep;
}

MetricsReport evaluate(const Model& model, const Dataset& raw,
                       const std::vector<DcOpfProblem>& problems,
                       const IsfMatrix& isf, int threads) {
  MetricsReport rep = evaluate(
      [&model](const Eigen::MatrixXd& x) { return model.predict(x); }, raw,
      problems, isf, threads);
  rep.parameter_count = model.parameter_count();
  return rep;
}

MetricsReport evaluate_constant(const Eigen::VectorXd& pi_const, const Dataset& raw,
                                const std::vector<DcOpfProblem>& problems,
                                const IsfMatrix& isf, int threads) {
  return evaluate([&pi_const](const Eigen::MatrixXd&) { return pi_const; }, raw,
                  problems, isf, threads);
}

namespace {

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
};

void adam_update(std::vector<double>& params, const std::vector<double>& grad,
                 AdamState& state, const TrainConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// composite loss on one standardized sample: squared L2 on standardized
// prices plus the physical-unit flow penalty
double sample_loss_and_grad(const Model& model, const Scenario& sc,
                            const DcOpfProblem& problem, const IsfMatrix& isf,
                            const NormalizationStats& st, double lambda_reg,
                            std::vector<double>* grad_out) {
  ForwardCache cache;
  const Eigen::VectorXd pi_std = model.forward(sc.features, &cache);
  Eigen::VectorXd dloss = 2.0 * (pi_std - sc.pi);
  double loss = (pi_std - sc.pi).squaredNorm();
  if (lambda_reg != 0.0) {
    const Eigen::VectorXd pi_phys =
        (pi_std.array() * st.y_std + st.y_mean).matrix();
    const auto pen = flow_violation_penalty(pi_phys, problem, isf);
    loss += lambda_reg * pen.value;
    dloss += lambda_reg * st.y_std * pen.grad;
  }
  if (grad_out != nullptr) model.backward(cache, dloss, *grad_out);
  return loss;
}

}  // namespace

TrainResult train(Model& model, const Dataset& train_norm, const Dataset& val_norm,
                  const Grid& grid, const TrainConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  if (!train_norm.stats || !val_norm.stats)
    throw InvalidConfigError("train expects normalized datasets");
  if (train_norm.stats->y_std != val_norm.stats->y_std ||
      train_norm.stats->y_mean != val_norm.stats->y_mean)
    throw InvalidConfigError("train/val datasets normalized inconsistently");
  if (train_norm.grid_hash != model.grid_hash() ||
      val_norm.grid_hash != model.grid_hash())
    throw SchemaMismatchError("dataset grid does not match the model grid");
  if (config.lr <= 0.0 || config.batch_size < 1 || config.lambda_reg < 0.0)
    throw InvalidConfigError("bad training configuration");

  const NormalizationStats st = *train_norm.stats;
  model.norm = st;

  const IsfMatrix isf = build_isf(grid);
  // recovery-chain problems need physical bounds/costs
  const Dataset train_raw = denormalize(train_norm);
  const Dataset val_raw = denormalize(val_norm);
  const auto train_problems = problems_from_dataset(grid, train_raw);
  const auto val_problems = problems_from_dataset(grid, val_raw);

  const int n_train = train_norm.count();
  const int n_val = val_norm.count();

  AdamState adam;
  adam.m.assign(model.params().size(), 0.0);
  adam.v.assign(model.params().size(), 0.0);

  Rng shuffle_rng(config.seed);
  std::vector<int> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = model.params();
  int stall = 0;

  std::vector<std::vector<double>> sample_grads;
  std::vector<double> batch_grad(model.params().size());

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::vector<double> epoch_losses(n_train, 0.0);

    for (int begin = 0; begin < n_train; begin += config.batch_size) {
      const int b = std::min(config.batch_size, n_train - begin);
      sample_grads.assign(b, {});
      std::vector<std::exception_ptr> errors(b);
      parallel_for(b, config.threads, [&](int k) {
        try {
          const int idx = order[begin + k];
          epoch_losses[begin + k] = sample_loss_and_grad(
              model, train_norm.scenarios[idx], train_problems[idx], isf, st,
              config.lambda_reg, &sample_grads[k]);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
      for (int k = 0; k < b; ++k)
        if (errors[k]) std::rethrow_exception(errors[k]);

      // ordered reduction: identical bits for any worker count
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      for (int k = 0; k < b; ++k)
        for (std::size_t i = 0; i < batch_grad.size(); ++i)
          batch_grad[i] += sample_grads[k][i];
      const double inv_b = 1.0 / static_cast<double>(b);
      for (auto& g : batch_grad) g *= inv_b;
      for (double g : batch_grad)
        if (!std::isfinite(g))
          throw NonFiniteError("training diverged at epoch " +
                               std::to_string(epoch));
      adam_update(model.params(), batch_grad, adam, config);
    }

    // validation pass
    std::vector<double> val_losses(n_val, 0.0);
    std::vector<double> val_nl2(n_val, 0.0), val_viol(n_val, 0.0);
    double total_limit = 0.0;
    for (const auto& e : grid.edges) total_limit += e.flow_limit;
    std::vector<std::exception_ptr> verrors(n_val);
    parallel_for(n_val, config.threads, [&](int i) {
      try {
        val_losses[i] =
            sample_loss_and_grad(model, val_norm.scenarios[i], val_problems[i],
                                 isf, st, config.lambda_reg, nullptr);
        const Eigen::VectorXd pi_hat = model.predict(val_raw.scenarios[i].features);
        const auto ev = eval_sample(pi_hat, val_raw.scenarios[i], val_problems[i],
                                    isf, total_limit);
        val_nl2[i] = ev.nl2;
        val_viol[i] = ev.violation;
      } catch (...) {
        verrors[i] = std::current_exception();
      }
    });
    for (int i = 0; i < n_val; ++i)
      if (verrors[i]) std::rethrow_exception(verrors[i]);

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = stable_mean(epoch_losses);
    es.val_loss = stable_mean(val_losses);
    es.val_normalized_l2 = stable_mean(val_nl2);
    es.val_violation_rate = stable_mean(val_viol);
    result.history.push_back(es);
    if (!std::isfinite(es.train_loss) || !std::isfinite(es.val_loss))
      throw NonFiniteError("training diverged at epoch " + std::to_string(epoch));
    log(LogLevel::Info, "epoch %d train %.6f val %.6f nl2 %.4f viol %.5f", epoch,
        es.train_loss, es.val_loss, es.val_normalized_l2, es.val_violation_rate);

    if (es.val_loss < best_val - 1e-12) {
      best_val = es.val_loss;
      best_params = model.params();
      stall = 0;
    } else if (config.early_stopping && ++stall >= config.patience) {
      break;
    }
  }

  if (config.early_stopping) model.params() = best_params;
  result.epochs_run = static_cast<int>(result.history.size());
  result.best_val_loss = best_val;
  result.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::string& path) {
  std::string out = "epoch,train_loss,val_loss,val_normalized_l2,val_violation_rate\n";
  for (const auto& e : history) {
    out += std::to_string(e.epoch) + "," + fmt_real(e.train_loss) + "," +
           fmt_real(e.val_loss) + "," + fmt_real(e.val_normalized_l2) + "," +
           fmt_real(e.val_violation_rate) + "\n";
  }
  write_text_file(path, out);
}

}  // namespace lmplab
