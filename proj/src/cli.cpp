#include "lmplab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lmplab/baseproblem.hpp"
#include "lmplab/dataset.hpp"
#include "lmplab/dcopf.hpp"
#include "lmplab/errors.hpp"
#include "lmplab/grid.hpp"
#include "lmplab/jsonio.hpp"
#include "lmplab/log.hpp"
#include "lmplab/nn.hpp"
#include "lmplab/rng.hpp"
#include "lmplab/training.hpp"
#include "lmplab/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lmplab {

// ------------------------------------------------------------- config

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw InvalidConfigError(where + ": not an unsigned integer: " + v);
  }
}

double parse_double(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw InvalidConfigError(where + ": not a number: " + v);
  }
}

int parse_int(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw InvalidConfigError(where + ": not an integer: " + v);
  }
}

}  // namespace

void apply_config_file(RunConfig& c, const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path + ":" + std::to_string(lineno);
    std::string body = line.substr(0, std::min(line.find('#'), line.find(';')));
    body = trim(body);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw InvalidConfigError(where + ": malformed section");
      section = trim(body.substr(1, body.size() - 2));
      if (section != "grid" && section != "data" && section != "model" &&
          section != "train" && section != "transfer")
        throw InvalidConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw InvalidConfigError(where + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "grid.n") c.grid_n = parse_int(value, where);
    else if (qual == "grid.avg_degree") c.grid_avg_degree = parse_double(value, where);
    else if (qual == "grid.limit_scale") c.grid_limit_scale = parse_double(value, where);
    else if (qual == "grid.seed") c.grid_seed = parse_u64(value, where);
    else if (qual == "grid.case_path") c.grid_case_path = value;
    else if (qual == "data.count") c.data_count = parse_int(value, where);
    else if (qual == "data.bound_jitter") c.bound_jitter = parse_double(value, where);
    else if (qual == "data.cost_jitter") c.cost_jitter = parse_double(value, where);
    else if (qual == "data.splits") c.splits = value;
    else if (qual == "data.seed") c.data_seed = parse_u64(value, where);
    else if (qual == "model.kind") c.model_kind = value;
    else if (qual == "model.dims") c.model_dims = value;
    else if (qual == "model.k") c.model_k = parse_int(value, where);
    else if (qual == "train.lr") c.lr = parse_double(value, where);
    else if (qual == "train.beta1") c.beta1 = parse_double(value, where);
    else if (qual == "train.beta2") c.beta2 = parse_double(value, where);
    else if (qual == "train.eps") c.eps = parse_double(value, where);
    else if (qual == "train.batch_size") c.batch_size = parse_int(value, where);
    else if (qual == "train.max_epochs") c.max_epochs = parse_int(value, where);
    else if (qual == "train.patience") c.patience = parse_int(value, where);
    else if (qual == "train.lambda_reg") c.lambda_reg = parse_double(value, where);
    else if (qual == "train.seed") c.train_seed = parse_u64(value, where);
    else if (qual == "transfer.max_lines") c.max_lines = parse_int(value, where);
    else if (qual == "transfer.finetune_epochs") c.finetune_epochs = parse_int(value, where);
    else if (qual == "transfer.seeds") c.transfer_seeds = value;
    else if (qual == "transfer.count") c.transfer_count = parse_int(value, where);
    else
      throw InvalidConfigError(where + ": unknown key '" + qual + "'");
  }
}

namespace {

template <typename T>
std::string opt_str(const std::optional<T>& v) {
  return v ? std::to_string(*v) : std::string("<unset>");
}

}  // namespace

std::string canonical_config_dump(const RunConfig& c) {
  std::string out;
  out += "grid.n=" + opt_str(c.grid_n) + "\n";
  out += "grid.avg_degree=" + (c.grid_avg_degree ? fmt_real(*c.grid_avg_degree)
                                                 : std::string("<unset>")) + "\n";
  out += "grid.limit_scale=" + fmt_real(c.grid_limit_scale) + "\n";
  out += "grid.seed=" + opt_str(c.grid_seed) + "\n";
  out += "grid.case_path=" + c.grid_case_path + "\n";
  out += "data.count=" + opt_str(c.data_count) + "\n";
  out += "data.bound_jitter=" + fmt_real(c.bound_jitter) + "\n";
  out += "data.cost_jitter=" + fmt_real(c.cost_jitter) + "\n";
  out += "data.splits=" + c.splits + "\n";
  out += "data.seed=" + opt_str(c.data_seed) + "\n";
  out += "model.kind=" + c.model_kind + "\n";
  out += "model.dims=" + c.model_dims + "\n";
  out += "model.k=" + std::to_string(c.model_k) + "\n";
  out += "train.lr=" + fmt_real(c.lr) + "\n";
  out += "train.beta1=" + fmt_real(c.beta1) + "\n";
  out += "train.beta2=" + fmt_real(c.beta2) + "\n";
  out += "train.eps=" + fmt_real(c.eps) + "\n";
  out += "train.batch_size=" + std::to_string(c.batch_size) + "\n";
  out += "train.max_epochs=" + std::to_string(c.max_epochs) + "\n";
  out += "train.patience=" + std::to_string(c.patience) + "\n";
  out += "train.lambda_reg=" + fmt_real(c.lambda_reg) + "\n";
  out += "train.seed=" + opt_str(c.train_seed) + "\n";
  out += "transfer.max_lines=" + std::to_string(c.max_lines) + "\n";
  out += "transfer.finetune_epochs=" + std::to_string(c.finetune_epochs) + "\n";
  out += "transfer.seeds=" + c.transfer_seeds + "\n";
  out += "transfer.count=" + opt_str(c.transfer_count) + "\n";
  out += "global.seed=" + opt_str(c.global_seed) + "\n";
  out += "global.threads=" + std::to_string(c.threads) + "\n";
  return out;
}

std::string config_digest(const RunConfig& c) {
  return hex64(fnv1a64(canonical_config_dump(c)));
}

std::vector<double> parse_fraction_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ','))
    out.push_back(parse_double(trim(tok), "fraction list '" + text + "'"));
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ','))
    out.push_back(parse_int(trim(tok), "integer list '" + text + "'"));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ','))
    out.push_back(parse_u64(trim(tok), "seed list '" + text + "'"));
  return out;
}

// ------------------------------------------------------------ commands

namespace {

std::uint64_t require_seed(const std::optional<std::uint64_t>& specific,
                           const std::optional<std::uint64_t>& global,
                           std::uint64_t stream, const std::string& field,
                           const std::string& flag) {
  if (specific) return *specific;
  if (global) return mix_seed(*global, stream);
  throw InvalidConfigError("missing required field: " + field + " (" + flag +
                           " or global --seed)");
}

Grid resolve_grid(const RunConfig& cfg, bool allow_generate) {
  if (!cfg.grid_case_path.empty()) return read_case(cfg.grid_case_path);
  if (!allow_generate)
    throw InvalidConfigError("missing required field: grid.case_path (--grid)");
  if (!cfg.grid_n)
    throw InvalidConfigError("missing required field: grid.n (--n)");
  if (!cfg.grid_avg_degree)
    throw InvalidConfigError("missing required field: grid.avg_degree (--avg-degree)");
  const std::uint64_t seed =
      require_seed(cfg.grid_seed, cfg.global_seed, 1, "grid.seed", "--grid-seed");
  return generate_synthetic_grid(*cfg.grid_n, *cfg.grid_avg_degree,
                                 cfg.grid_limit_scale, seed);
}

std::array<double, 3> resolve_splits(const RunConfig& cfg) {
  const auto f = parse_fraction_list(cfg.splits);
  if (f.size() != 3)
    throw InvalidConfigError("data.splits needs exactly three fractions");
  return {f[0], f[1], f[2]};
}

ModelConfig resolve_model(const RunConfig& cfg, const Grid& grid, int input_d) {
  ModelConfig mc;
  mc.kind = model_kind_from_name(cfg.model_kind);
  mc.filter_order = cfg.model_k;
  std::string dims = cfg.model_dims;
  if (dims.empty())
    dims = mc.kind == ModelKind::Gnn     ? "32,32"
           : mc.kind == ModelKind::Fcnn  ? "256,256"
                                         : "8,8";
  const auto hidden = parse_int_list(dims);
  if (mc.kind == ModelKind::Fcnn) {
    mc.dims.push_back(grid.n_nodes * input_d);
    for (int h : hidden) mc.dims.push_back(h);
    mc.dims.push_back(grid.n_nodes);
  } else {
    mc.dims.push_back(input_d);
    for (int h : hidden) mc.dims.push_back(h);
    mc.dims.push_back(1);
  }
  return mc;
}

std::string metrics_json(const MetricsReport& rep) {
  JsonObjectWriter w;
  w.field_real("normalized_l2", rep.normalized_l2);
  w.field_real("violation_rate", rep.violation_rate);
  w.field_real("feasibility_ratio", rep.feasibility_ratio);
  w.field_real("sample_feasible_fraction", rep.sample_feasible_fraction);
  w.field_bool("violation_clipped", rep.violation_clipped);
  w.field_int("epochs_run", rep.epochs_run);
  // wall time is runtime-dependent; artifacts must be byte-reproducible
  w.field_real("wall_time_sec", 0.0);
  w.field_int("parameter_count", rep.parameter_count);
  return w.str();
}

struct TrainArtifacts {
  std::string checkpoint_path;
  std::string history_path;
  std::string metrics_path;
};

int cmd_grid_gen(const RunConfig& cfg, const std::string& out_file) {
  const Grid grid = resolve_grid(cfg, true);
  fs::create_directories(fs::path(out_file).parent_path().empty()
                             ? "."
                             : fs::path(out_file).parent_path().string());
  write_case(grid, out_file);
  std::printf("grid: n=%d edges=%d ref=%d connected=%s hash=%s\n", grid.n_nodes,
              grid.n_edges(), grid.reference_node,
              is_connected(grid.n_nodes, grid.edges) ? "yes" : "no",
              grid_hash(grid).c_str());
  std::printf("wrote %s\n", out_file.c_str());
  return 0;
}

int cmd_data_gen(const RunConfig& cfg) {
  const Grid grid = resolve_grid(cfg, true);
  if (!cfg.data_count)
    throw InvalidConfigError("missing required field: data.count (--count)");
  const std::uint64_t seed =
      require_seed(cfg.data_seed, cfg.global_seed, 2, "data.seed", "--data-seed");
  const DcOpfProblem base = make_base_problem(grid, mix_seed(seed, 0xba5e));

  const Dataset all =
      sample_scenarios(grid, base, PerturbSpec{cfg.bound_jitter, cfg.cost_jitter},
                       *cfg.data_count, seed, cfg.threads);
  const auto parts = split(all, resolve_splits(cfg), mix_seed(seed, 0x5bf1));

  fs::create_directories(cfg.out_dir);
  const std::string digest = config_digest(cfg);
  if (cfg.grid_case_path.empty())
    write_case(grid, (fs::path(cfg.out_dir) / "grid.case").string());
  const char* names[3] = {"train.jsonl", "val.jsonl", "test.jsonl"};
  for (int i = 0; i < 3; ++i)
    write_dataset(parts[i], (fs::path(cfg.out_dir) / names[i]).string(),
                  kToolVersion, digest);

  std::printf("scenarios: %d (train %d / val %d / test %d)\n", all.count(),
              parts[0].count(), parts[1].count(), parts[2].count());
  std::printf("congested fraction: overall %.6f train %.6f val %.6f test %.6f\n",
              all.congested_fraction(), parts[0].congested_fraction(),
              parts[1].congested_fraction(), parts[2].congested_fraction());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir,
              TrainArtifacts* out_paths) {
  const Grid grid = resolve_grid(cfg, false);
  const std::string dir = data_dir.empty() ? cfg.out_dir : data_dir;
  const Dataset train_raw =
      read_dataset((fs::path(dir) / "train.jsonl").string(), grid);
  const Dataset val_raw = read_dataset((fs::path(dir) / "val.jsonl").string(), grid);
  const Dataset test_raw =
      read_dataset((fs::path(dir) / "test.jsonl").string(), grid);

  const std::uint64_t seed = require_seed(cfg.train_seed, cfg.global_seed, 3,
                                          "train.seed", "--train-seed");
  const ModelConfig mc = resolve_model(cfg, grid, train_raw.schema.d());
  Model model(grid, mc, mix_seed(seed, 7));

  const Dataset train_norm = normalize(train_raw);
  const Dataset val_norm = normalize(val_raw, train_norm.stats);

  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.beta1 = cfg.beta1;
  tc.beta2 = cfg.beta2;
  tc.eps = cfg.eps;
  tc.batch_size = cfg.batch_size;
  tc.max_epochs = cfg.max_epochs;
  tc.patience = cfg.patience;
  tc.lambda_reg = cfg.lambda_reg;
  tc.seed = seed;
  tc.threads = cfg.threads;
  const TrainResult res = train(model, train_norm, val_norm, grid, tc);

  const IsfMatrix isf = build_isf(grid);
  const auto test_problems = problems_from_dataset(grid, test_raw);
  MetricsReport test_rep = evaluate(model, test_raw, test_problems, isf, cfg.threads);
  test_rep.epochs_run = res.epochs_run;
  MetricsReport base_rep = evaluate_constant(mean_label(train_raw), test_raw,
                                             test_problems, isf, cfg.threads);

  fs::create_directories(cfg.out_dir);
  const std::string digest = config_digest(cfg);
  TrainArtifacts paths;
  paths.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.json").string();
  paths.history_path = (fs::path(cfg.out_dir) / "history.csv").string();
  paths.metrics_path = (fs::path(cfg.out_dir) / "metrics.json").string();
  save_checkpoint(model, paths.checkpoint_path, kToolVersion, digest);
  write_history_csv(res.history, paths.history_path);

  JsonObjectWriter w;
  w.field_string("tool_version", kToolVersion);
  w.field_string("config_digest", digest);
  w.field_string("kind", model_kind_name(model.kind()));
  w.field_bool("fr", cfg.lambda_reg != 0.0);
  w.field_real("lambda_reg", cfg.lambda_reg);
  w.field_int("parameter_count", model.parameter_count());
  w.field_int("epochs_run", res.epochs_run);
  w.field_raw("test", metrics_json(test_rep));
  w.field_raw("baseline", metrics_json(base_rep));
  write_text_file(paths.metrics_path, w.str() + "\n");

  std::printf("trained %s: epochs=%d val_loss=%.6g (%.1fs)\n",
              model_kind_name(model.kind()), res.epochs_run, res.best_val_loss,
              res.wall_time_sec);
  std::printf("test normalized_l2=%.6f violation_rate=%.6f (baseline %.6f / %.6f)\n",
              test_rep.normalized_l2, test_rep.violation_rate,
              base_rep.normalized_l2, base_rep.violation_rate);
  std::printf("wrote %s, %s, %s\n", paths.checkpoint_path.c_str(),
              paths.history_path.c_str(), paths.metrics_path.c_str());
  if (out_paths) *out_paths = paths;
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& dataset_path) {
  const Grid grid = resolve_grid(cfg, false);
  const Model model = load_checkpoint(checkpoint_path, grid);
  const Dataset ds = read_dataset(dataset_path, grid);  // hash chain check
  const IsfMatrix isf = build_isf(grid);
  const auto problems = problems_from_dataset(grid, ds);
  const MetricsReport rep = evaluate(model, ds, problems, isf, cfg.threads);

  fs::create_directories(cfg.out_dir);
  JsonObjectWriter w;
  w.field_string("tool_version", kToolVersion);
  w.field_string("config_digest", config_digest(cfg));
  w.field_string("kind", model_kind_name(model.kind()));
  w.field_int("parameter_count", model.parameter_count());
  w.field_raw("metrics", metrics_json(rep));
  const std::string path = (fs::path(cfg.out_dir) / "eval_metrics.json").string();
  write_text_file(path, w.str() + "\n");
  std::printf("eval: normalized_l2=%.6f violation_rate=%.6f feasibility=%.6f\n",
              rep.normalized_l2, rep.violation_rate, rep.feasibility_ratio);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_transfer(const RunConfig& cfg, const std::string& checkpoint_path,
                 bool dump_errors) {
  const Grid grid = resolve_grid(cfg, false);
  const Model model = load_checkpoint(checkpoint_path, grid);
  if (!cfg.data_count && !cfg.transfer_count)
    throw InvalidConfigError("missing required field: transfer.count (--count)");
  const std::uint64_t data_seed = require_seed(cfg.data_seed, cfg.global_seed, 2,
                                               "data.seed", "--data-seed");
  const std::uint64_t train_seed = require_seed(cfg.train_seed, cfg.global_seed, 3,
                                                "train.seed", "--train-seed");

  TransferSetup setup;
  setup.base_problem = make_base_problem(grid, mix_seed(data_seed, 0xba5e));
  setup.perturb = PerturbSpec{cfg.bound_jitter, cfg.cost_jitter};
  setup.count = cfg.transfer_count ? *cfg.transfer_count : *cfg.data_count;
  setup.splits = resolve_splits(cfg);
  setup.max_lines = cfg.max_lines;
  setup.threads = cfg.threads;
  setup.train.lr = cfg.lr;
  setup.train.beta1 = cfg.beta1;
  setup.train.beta2 = cfg.beta2;
  setup.train.eps = cfg.eps;
  setup.train.batch_size = cfg.batch_size;
  setup.train.max_epochs = cfg.max_epochs;
  setup.train.patience = cfg.patience;
  setup.train.lambda_reg = cfg.lambda_reg;
  setup.train.threads = cfg.threads;
  setup.scratch_config = ModelConfig{model.kind(), model.dims(), model.filter_order()};

  const auto seeds = parse_seed_list(cfg.transfer_seeds);
  if (seeds.empty()) throw InvalidConfigError("transfer.seeds must not be empty");

  fs::create_directories(cfg.out_dir);
  const std::string digest = config_digest(cfg);
  std::string experiments = "[";
  std::vector<double> pre_nl2, ft_nl2, sc_nl2, pre_viol, ft_viol;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    setup.data_seed = mix_seed(data_seed, seeds[k]);
    setup.scratch_model_seed = mix_seed(train_seed, seeds[k]);
    setup.train.seed = mix_seed(train_seed, mix_seed(seeds[k], 1));
    const TopologyExperiment exp = run_transfer_experiment(
        model, grid, seeds[k], setup, cfg.finetune_epochs);

    if (k) experiments += ",";
    JsonObjectWriter e;
    e.field_int("seed", static_cast<long long>(seeds[k]));
    e.field_string("base_grid_hash", exp.base_grid_hash);
    e.field_string("new_grid_hash", exp.new_grid_hash);
    e.field_string("test_set_digest", exp.test_set_digest);
    std::string removed = "[";
    for (std::size_t i = 0; i < exp.removed_edges.size(); ++i) {
      if (i) removed += ",";
      removed += std::to_string(exp.removed_edges[i]);
    }
    removed += "]";
    e.field_raw("removed_edges", removed);
    e.field_int("finetune_epochs", exp.finetune_epochs);
    e.field_raw("pretrained", metrics_json(exp.pretrained));
    e.field_raw("finetuned", metrics_json(exp.finetuned));
    e.field_raw("scratch", metrics_json(exp.scratch));
    experiments += e.str();

    pre_nl2.push_back(exp.pretrained.normalized_l2);
    ft_nl2.push_back(exp.finetuned.normalized_l2);
    sc_nl2.push_back(exp.scratch.normalized_l2);
    pre_viol.push_back(exp.pretrained.violation_rate);
    ft_viol.push_back(exp.finetuned.violation_rate);

    if (dump_errors) {
      std::string tsv = "sample\tpretrained_l2\tfinetuned_l2\n";
      for (std::size_t i = 0; i < exp.pretrained_sample_l2.size(); ++i)
        tsv += std::to_string(i) + "\t" + fmt_real(exp.pretrained_sample_l2[i]) +
               "\t" + fmt_real(exp.finetuned_sample_l2[i]) + "\n";
      write_text_file((fs::path(cfg.out_dir) /
                       ("transfer_errors_seed" + std::to_string(seeds[k]) + ".tsv"))
                          .string(),
                      tsv);
    }
    std::printf("seed %llu: pre %.6f -> finetuned %.6f (scratch %.6f)\n",
                static_cast<unsigned long long>(seeds[k]),
                exp.pretrained.normalized_l2, exp.finetuned.normalized_l2,
                exp.scratch.normalized_l2);
  }
  experiments += "]";

  JsonObjectWriter w;
  w.field_string("tool_version", kToolVersion);
  w.field_string("config_digest", digest);
  w.field_int("finetune_epochs", cfg.finetune_epochs);
  w.field_int("max_lines", cfg.max_lines);
  w.field_raw("experiments", experiments);
  JsonObjectWriter agg;
  agg.field_real("median_pretrained_normalized_l2", median_of(pre_nl2));
  agg.field_real("median_finetuned_normalized_l2", median_of(ft_nl2));
  agg.field_real("median_scratch_normalized_l2", median_of(sc_nl2));
  agg.field_real("median_pretrained_violation_rate", median_of(pre_viol));
  agg.field_real("median_finetuned_violation_rate", median_of(ft_viol));
  w.field_raw("aggregate", agg.str());
  const std::string path = (fs::path(cfg.out_dir) / "transfer_report.json").string();
  write_text_file(path, w.str() + "\n");
  std::printf("medians: pre %.6f finetuned %.6f scratch %.6f\n", median_of(pre_nl2),
              median_of(ft_nl2), median_of(sc_nl2));
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

void print_metrics_line(const char* tag, const json& m) {
  std::printf("  %-10s nl2=%-10.6f viol=%-10.6f feas=%-8.6f feasible_frac=%.4f\n",
              tag, m.value("normalized_l2", 0.0), m.value("violation_rate", 0.0),
              m.value("feasibility_ratio", 0.0),
              m.value("sample_feasible_fraction", 0.0));
}

int cmd_report(const std::vector<std::string>& files) {
  for (const auto& file : files) {
    json j = json::parse(read_text_file(file), nullptr, false);
    if (j.is_discarded()) throw ParseError(file + ": malformed JSON");
    std::printf("%s:\n", file.c_str());
    if (j.contains("experiments")) {
      for (const auto& e : j["experiments"]) {
        std::printf(" seed %llu, removed %zu line(s):\n",
                    static_cast<unsigned long long>(e.value("seed", 0ULL)),
                    e["removed_edges"].size());
        print_metrics_line("pretrained", e["pretrained"]);
        print_metrics_line("finetuned", e["finetuned"]);
        print_metrics_line("scratch", e["scratch"]);
      }
      const auto& a = j["aggregate"];
      std::printf(" medians: pre %.6f -> finetuned %.6f (scratch %.6f)\n",
                  a.value("median_pretrained_normalized_l2", 0.0),
                  a.value("median_finetuned_normalized_l2", 0.0),
                  a.value("median_scratch_normalized_l2", 0.0));
    } else if (j.contains("test")) {
      std::printf(" %s (fr=%s, %lld parameters, %d epochs)\n",
                  j.value("kind", "?").c_str(), j.value("fr", false) ? "on" : "off",
                  static_cast<long long>(j.value("parameter_count", 0LL)),
                  j.value("epochs_run", 0));
      print_metrics_line("test", j["test"]);
      print_metrics_line("baseline", j["baseline"]);
    } else if (j.contains("metrics")) {
      print_metrics_line("metrics", j["metrics"]);
    } else {
      std::printf("  (unrecognized report layout)\n");
    }
  }
  return 0;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const CLI::Error&) {
    throw;  // handled by the caller
  } catch (const InvalidConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const InvalidFractionsError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const TooManyInfeasibleError& e) {
    std::fprintf(stderr, "data generation failed: %s\n", e.what());
    return kExitData;
  } catch (const NoConvergenceError& e) {
    std::fprintf(stderr, "solver failed: %s\n", e.what());
    return kExitData;
  } catch (const NonFiniteError& e) {
    std::fprintf(stderr, "training failed: %s\n", e.what());
    return kExitTraining;
  } catch (const SchemaMismatchError& e) {
    std::fprintf(stderr, "integrity error: %s\n", e.what());
    return kExitIntegrity;
  } catch (const NoValidPerturbationError& e) {
    std::fprintf(stderr, "transfer error: %s\n", e.what());
    return kExitTransfer;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitConfig;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  RunConfig cfg;
  std::string config_path;

  // the config file applies before flag parsing so flags win
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
  if (!config_path.empty()) {
    const int rc = guarded([&] {
      apply_config_file(cfg, config_path);
      return 0;
    });
    if (rc != 0) return rc;
  }

  CLI::App app{"dc-OPF price learning toolkit"};
  app.require_subcommand(1);
  std::string config_dummy;
  app.add_option("--config", config_dummy, "config file (sections grid/data/model/train/transfer)");
  app.add_option("--seed", cfg.global_seed, "master seed; fills unset section seeds");
  app.add_option("--threads", cfg.threads, "worker threads (1 = serial, bit-reproducible)");
  app.add_option("--out", cfg.out_dir, "output directory");

  auto add_grid_source = [&](CLI::App* sub, bool generated) {
    sub->add_option("--grid", cfg.grid_case_path, "grid case file");
    if (generated) {
      sub->add_option("--n", cfg.grid_n, "node count");
      sub->add_option("--avg-degree", cfg.grid_avg_degree, "average node degree");
      sub->add_option("--limit-scale", cfg.grid_limit_scale, "flow limit scale");
      sub->add_option("--grid-seed", cfg.grid_seed, "grid generation seed");
    }
  };
  auto add_data_options = [&](CLI::App* sub) {
    sub->add_option("--bound-jitter", cfg.bound_jitter, "injection bound jitter");
    sub->add_option("--cost-jitter", cfg.cost_jitter, "cost coefficient jitter");
    sub->add_option("--splits", cfg.splits, "train,val,test fractions");
    sub->add_option("--data-seed", cfg.data_seed, "scenario sampling seed");
  };
  auto add_train_options = [&](CLI::App* sub) {
    sub->add_option("--lr", cfg.lr, "learning rate");
    sub->add_option("--beta1", cfg.beta1, "first moment decay");
    sub->add_option("--beta2", cfg.beta2, "second moment decay");
    sub->add_option("--eps", cfg.eps, "optimizer epsilon");
    sub->add_option("--batch-size", cfg.batch_size, "mini-batch size");
    sub->add_option("--max-epochs", cfg.max_epochs, "epoch cap");
    sub->add_option("--patience", cfg.patience, "early-stopping patience");
    sub->add_option("--lambda-reg", cfg.lambda_reg,
                    "feasibility penalty weight (0 = plain MSE)");
    sub->add_option("--train-seed", cfg.train_seed, "training seed");
  };

  // grid-gen
  auto* grid_gen = app.add_subcommand("grid-gen", "generate a synthetic grid case");
  std::string grid_out = "grid.case";
  grid_gen->add_option("--n", cfg.grid_n, "node count");
  grid_gen->add_option("--avg-degree", cfg.grid_avg_degree, "average node degree");
  grid_gen->add_option("--limit-scale", cfg.grid_limit_scale, "flow limit scale");
  grid_gen->add_option("--grid-seed", cfg.grid_seed, "grid generation seed");
  grid_gen->add_option("-o,--output", grid_out, "output case path");

  // data-gen
  auto* data_gen = app.add_subcommand("data-gen", "sample and label OPF scenarios");
  add_grid_source(data_gen, true);
  data_gen->add_option("--count", cfg.data_count, "scenario count");
  add_data_options(data_gen);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a price predictor");
  std::string data_dir;
  add_grid_source(train_cmd, false);
  train_cmd->add_option("--data", data_dir, "directory with train/val/test.jsonl");
  train_cmd->add_option("--kind", cfg.model_kind, "gnn|fcnn|gidnn");
  train_cmd->add_option("--dims", cfg.model_dims, "hidden widths, e.g. 32,32");
  train_cmd->add_option("--K", cfg.model_k, "graph filter order");
  add_train_options(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string checkpoint_path, dataset_path;
  add_grid_source(eval_cmd, false);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  eval_cmd->add_option("--dataset", dataset_path, "dataset JSONL")->required();

  // transfer
  auto* transfer_cmd =
      app.add_subcommand("transfer", "topology adaptivity experiments");
  std::string transfer_checkpoint;
  bool dump_errors = false;
  add_grid_source(transfer_cmd, false);
  transfer_cmd->add_option("--checkpoint", transfer_checkpoint, "pretrained model")
      ->required();
  transfer_cmd->add_option("--max-lines", cfg.max_lines, "lines to disconnect (1-2)");
  transfer_cmd->add_option("--finetune-epochs", cfg.finetune_epochs,
                           "fine-tuning epoch budget");
  transfer_cmd->add_option("--seeds", cfg.transfer_seeds, "perturbation seeds");
  transfer_cmd->add_option("--count", cfg.transfer_count,
                           "scenario count per experiment");
  add_data_options(transfer_cmd);
  add_train_options(transfer_cmd);
  transfer_cmd->add_flag("--dump-errors", dump_errors,
                         "write per-sample L2 errors as TSV");

  // report
  auto* report_cmd = app.add_subcommand("report", "summarize metrics JSON files");
  std::vector<std::string> report_files;
  report_cmd->add_option("files", report_files, "metrics/report JSON files")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (cfg.threads < 0) {
    std::fprintf(stderr, "config error: --threads must be >= 0\n");
    return kExitConfig;
  }

  return guarded([&]() -> int {
    if (grid_gen->parsed()) return cmd_grid_gen(cfg, grid_out);
    if (data_gen->parsed()) return cmd_data_gen(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg, data_dir, nullptr);
    if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint_path, dataset_path);
    if (transfer_cmd->parsed())
      return cmd_transfer(cfg, transfer_checkpoint, dump_errors);
    if (report_cmd->parsed()) return cmd_report(report_files);
    return kExitConfig;
  });
}

}  // namespace lmplab
