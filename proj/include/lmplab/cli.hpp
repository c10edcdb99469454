#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lmplab {

inline constexpr const char* kToolVersion = "lmplab 0.1.0";

// exit codes fixed for scripting
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitTraining = 4;
inline constexpr int kExitIntegrity = 5;
inline constexpr int kExitTransfer = 6;

/// Resolved configuration of one CLI invocation. Values come from the
/// optional config file first, then flags (flags win). Seeds have no
/// wall-clock fallback: a missing seed is a config error unless the
/// global --seed is given, from which per-section seeds are derived.
struct RunConfig {
  // [grid]
  std::optional<int> grid_n;
  std::optional<double> grid_avg_degree;
  double grid_limit_scale = 1.0;
  std::optional<std::uint64_t> grid_seed;
  std::string grid_case_path;
  // [data]
  std::optional<int> data_count;
  double bound_jitter = 0.2;
  double cost_jitter = 0.2;
  std::string splits = "0.8,0.1,0.1";
  std::optional<std::uint64_t> data_seed;
  // [model]
  std::string model_kind = "gnn";
  std::string model_dims;  // hidden widths, e.g. "32,32"; kind-dependent default
  int model_k = 2;
  // [train]
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 32;
  int max_epochs = 300;
  int patience = 10;
  double lambda_reg = 1.0;
  std::optional<std::uint64_t> train_seed;
  // [transfer]
  int max_lines = 2;
  int finetune_epochs = 5;
  std::string transfer_seeds = "101,102,103,104,105";
  std::optional<int> transfer_count;
  // globals
  std::optional<std::uint64_t> global_seed;
  int threads = 1;
  std::string out_dir = ".";
};

/// Applies a config file ([grid]/[data]/[model]/[train]/[transfer]
/// sections, key = value lines, # comments). Unknown sections or keys
/// raise InvalidConfigError.
void apply_config_file(RunConfig& config, const std::string& path);

/// Canonical "section.key=value" dump of every resolved field, in fixed
/// order; its FNV-1a digest is embedded in all JSON artifacts.
std::string canonical_config_dump(const RunConfig& config);
std::string config_digest(const RunConfig& config);

std::vector<double> parse_fraction_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace lmplab
