#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmplab/dcopf.hpp"
#include "lmplab/grid.hpp"

namespace lmplab {

enum class FeatureColumn { PMax, PMin, QMax, QMin, CostA, CostB };

const char* feature_column_name(FeatureColumn c);
FeatureColumn feature_column_from_name(const std::string& name);

/// Ordered per-node feature columns. The dc default is
/// [p_max, p_min, cost_a, cost_b]; q columns are zero-filled placeholders.
struct FeatureSchema {
  std::vector<FeatureColumn> columns;

  static FeatureSchema dc_default();
  int d() const { return static_cast<int>(columns.size()); }
  bool operator==(const FeatureSchema&) const = default;
};

/// One labeled OPF instance: features X (N x d), LMP label pi, and the
/// solver audit trail used to re-verify the label.
struct Scenario {
  Eigen::MatrixXd features;
  Eigen::VectorXd pi;
  Eigen::VectorXd p_star;
  Eigen::VectorXd f_star;
  double lambda = 0.0;
  std::vector<int> congested_lines;  // flow limits active at the optimum
};

struct NormalizationStats {
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_std;
  double y_mean = 0.0;
  double y_std = 1.0;
};

struct Dataset {
  std::string grid_hash;
  FeatureSchema schema;
  std::vector<Scenario> scenarios;
  /// Present on normalized views; stored files always hold raw values.
  std::optional<NormalizationStats> stats;

  int count() const { return static_cast<int>(scenarios.size()); }
  double congested_fraction() const;
};

struct PerturbSpec {
  double bound_jitter = 0.2;
  double cost_jitter = 0.2;
};

/// slack <= kCongestionSlack * max(1, limit) marks a line as congested
inline constexpr double kCongestionSlack = 1e-7;

/// Per-index generation kernel: deterministic in (seed, index) alone, so
/// scenarios can be produced in any order or concurrently. Infeasible
/// draws are redrawn up to 20 times (TooManyInfeasibleError after that).
Scenario sample_scenario_at(const Grid& grid, const IsfMatrix& isf,
                            const DcOpfProblem& base, const FeatureSchema& schema,
                            const PerturbSpec& perturb, std::uint64_t seed,
                            int index);

Dataset sample_scenarios(const Grid& grid, const DcOpfProblem& base,
                         const PerturbSpec& perturb, int count, std::uint64_t seed,
                         int threads = 1,
                         const FeatureSchema& schema = FeatureSchema::dc_default());

std::array<Dataset, 3> split(const Dataset& dataset,
                             const std::array<double, 3>& fractions,
                             std::uint64_t seed);

/// Standardizes features per column and labels by a scalar mean/stdev
/// (stdev floored at 1e-8). Pass train stats to transform val/test.
Dataset normalize(const Dataset& dataset,
                  const std::optional<NormalizationStats>& use = std::nullopt);
Dataset denormalize(const Dataset& dataset);

NormalizationStats compute_stats(const Dataset& dataset);

void write_dataset(const Dataset& dataset, const std::string& path,
                   const std::string& tool_version = "",
                   const std::string& config_digest = "");
Dataset read_dataset(const std::string& path);
Dataset read_dataset(const std::string& path, const Grid& expected_grid);

/// Rebuilds the OPF instance a scenario was labeled with. Requires the
/// schema to carry p_max, p_min, cost_a and cost_b.
DcOpfProblem problem_from_scenario(const Grid& grid, const FeatureSchema& schema,
                                   const Eigen::MatrixXd& features);

/// Per-node mean of the raw labels (the constant-predictor baseline).
Eigen::VectorXd mean_label(const Dataset& dataset);

}  // namespace lmplab
