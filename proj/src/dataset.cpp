#include "lmplab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lmplab/errors.hpp"
#include "lmplab/jsonio.hpp"
#include "lmplab/parallel.hpp"
#include "lmplab/rng.hpp"

namespace lmplab {

using nlohmann::json;

const char* feature_column_name(FeatureColumn c) {
  switch (c) {
    case FeatureColumn::PMax: return "p_max";
    case FeatureColumn::PMin: return "p_min";
    case FeatureColumn::QMax: return "q_max";
    case FeatureColumn::QMin: return "q_min";
    case FeatureColumn::CostA: return "cost_a";
    case FeatureColumn::CostB: return "cost_b";
  }
  return "?";
}

FeatureColumn feature_column_from_name(const std::string& name) {
  for (FeatureColumn c : {FeatureColumn::PMax, FeatureColumn::PMin,
                          FeatureColumn::QMax, FeatureColumn::QMin,
                          FeatureColumn::CostA, FeatureColumn::CostB})
    if (name == feature_column_name(c)) return c;
  throw ParseError("unknown feature column: " + name);
}

FeatureSchema FeatureSchema::dc_default() {
  return FeatureSchema{{FeatureColumn::PMax, FeatureColumn::PMin,
                        FeatureColumn::CostA, FeatureColumn::CostB}};
}

double Dataset::congested_fraction() const {
  if (scenarios.empty()) return 0.0;
  int congested = 0;
  for (const auto& s : scenarios)
    if (!s.congested_lines.empty()) ++congested;
  return static_cast<double>(congested) / static_cast<double>(scenarios.size());
}

namespace {

Eigen::MatrixXd features_of_problem(const DcOpfProblem& problem,
                                    const FeatureSchema& schema) {
  const int n = problem.grid.n_nodes;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, schema.d());
  for (int c = 0; c < schema.d(); ++c) {
    switch (schema.columns[c]) {
      case FeatureColumn::PMax: x.col(c) = problem.p_max; break;
      case FeatureColumn::PMin: x.col(c) = problem.p_min; break;
      case FeatureColumn::CostA: x.col(c) = problem.cost_a; break;
      case FeatureColumn::CostB: x.col(c) = problem.cost_b; break;
      case FeatureColumn::QMax:
      case FeatureColumn::QMin: break;  // dc placeholders stay zero
    }
  }
  return x;
}

}  // namespace

DcOpfProblem problem_from_scenario(const Grid& grid, const FeatureSchema& schema,
                                   const Eigen::MatrixXd& features) {
  auto col_of = [&](FeatureColumn want) {
    for (int c = 0; c < schema.d(); ++c)
      if (schema.columns[c] == want) return c;
    throw SchemaMismatchError(
        std::string("schema lacks column required for problem recovery: ") +
        feature_column_name(want));
  };
  if (features.rows() != grid.n_nodes || features.cols() != schema.d())
    throw DimensionMismatchError("feature matrix shape does not match grid/schema");
  DcOpfProblem p;
  p.grid = grid;
  p.p_max = features.col(col_of(FeatureColumn::PMax));
  p.p_min = features.col(col_of(FeatureColumn::PMin));
  p.cost_a = features.col(col_of(FeatureColumn::CostA));
  p.cost_b = features.col(col_of(FeatureColumn::CostB));
  return p;
}

Scenario sample_scenario_at(const Grid& grid, const IsfMatrix& isf,
                            const DcOpfProblem& base, const FeatureSchema& schema,
                            const PerturbSpec& perturb, std::uint64_t seed,
                            int index) {
  if (perturb.bound_jitter < 0.0 || perturb.bound_jitter >= 1.0 ||
      perturb.cost_jitter < 0.0 || perturb.cost_jitter >= 1.0)
    throw InvalidConfigError("jitters must lie in [0, 1)");
  constexpr int kMaxAttempts = 20;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  const int n = grid.n_nodes;

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    DcOpfProblem inst = base;
    for (int i = 0; i < n; ++i) {
      const double bj = perturb.bound_jitter;
      const double cj = perturb.cost_jitter;
      if (base.p_min[i] == base.p_max[i]) {
        // fixed node: both bounds move together, the load stays fixed-type
        const double f = rng.uniform(1.0 - bj, 1.0 + bj);
        inst.p_min[i] = base.p_min[i] * f;
        inst.p_max[i] = base.p_max[i] * f;
      } else {
        inst.p_min[i] = base.p_min[i] * rng.uniform(1.0 - bj, 1.0 + bj);
        inst.p_max[i] = base.p_max[i] * rng.uniform(1.0 - bj, 1.0 + bj);
      }
      inst.cost_a[i] = base.cost_a[i] * rng.uniform(1.0 - cj, 1.0 + cj);
      inst.cost_b[i] = base.cost_b[i] * rng.uniform(1.0 - cj, 1.0 + cj);
    }

    bool shape_ok = true;
    for (int i = 0; i < n; ++i)
      if (inst.p_min[i] > inst.p_max[i]) shape_ok = false;
    if (!shape_ok || inst.p_min.sum() > 0.0 || inst.p_max.sum() < 0.0)
      continue;  // invalid draw, redraw

    DcOpfSolution sol;
    try {
      sol = solve_dcopf(inst, isf);
    } catch (const NoConvergenceError&) {
      throw;  // a solver failure is not a redraw event
    }
    if (sol.status != SolveStatus::Optimal) continue;

    Scenario sc;
    sc.features = features_of_problem(inst, schema);
    sc.pi = sol.pi;
    sc.p_star = sol.p_star;
    sc.f_star = sol.f_star;
    sc.lambda = sol.lambda;
    for (int e = 0; e < grid.n_edges(); ++e) {
      const double limit = grid.edges[e].flow_limit;
      if (limit - std::abs(sol.f_star[e]) <= kCongestionSlack * std::max(1.0, limit))
        sc.congested_lines.push_back(e);
    }
    return sc;
  }
  throw TooManyInfeasibleError("scenario " + std::to_string(index) +
                               ": no feasible draw in 20 attempts");
}

Dataset sample_scenarios(const Grid& grid, const DcOpfProblem& base,
                         const PerturbSpec& perturb, int count, std::uint64_t seed,
                         int threads, const FeatureSchema& schema) {
  if (count < 1) throw InvalidConfigError("scenario count must be >= 1");
  base.validate();
  const IsfMatrix isf = build_isf(grid);

  Dataset ds;
  ds.grid_hash = grid_hash(grid);
  ds.schema = schema;
  ds.scenarios.resize(count);

  std::vector<std::exception_ptr> errors(count);
  parallel_for(count, threads, [&](int i) {
    try {
      ds.scenarios[i] = sample_scenario_at(grid, isf, base, schema, perturb, seed, i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (int i = 0; i < count; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);
  return ds;
}

std::array<Dataset, 3> split(const Dataset& dataset,
                             const std::array<double, 3>& fractions,
                             std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) throw InvalidFractionsError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidFractionsError("split fractions must sum to 1");

  const int n = dataset.count();
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const int n_train = static_cast<int>(std::llround(fractions[0] * n));
  const int n_val = static_cast<int>(std::llround(fractions[1] * n));
  const int n_test = n - n_train - n_val;
  if (n_train < 0 || n_val < 0 || n_test < 0)
    throw InvalidFractionsError("split sizes came out negative");

  std::array<Dataset, 3> out;
  const int sizes[3] = {n_train, n_val, n_test};
  int cursor = 0;
  for (int part = 0; part < 3; ++part) {
    out[part].grid_hash = dataset.grid_hash;
    out[part].schema = dataset.schema;
    out[part].scenarios.reserve(sizes[part]);
    for (int k = 0; k < sizes[part]; ++k)
      out[part].scenarios.push_back(dataset.scenarios[order[cursor++]]);
  }
  return out;
}

NormalizationStats compute_stats(const Dataset& dataset) {
  if (dataset.scenarios.empty())
    throw InvalidConfigError("cannot compute stats of an empty dataset");
  const int d = dataset.schema.d();
  const auto n = dataset.scenarios.front().features.rows();
  NormalizationStats st;
  st.x_mean = Eigen::VectorXd::Zero(d);
  st.x_std = Eigen::VectorXd::Zero(d);
  double rows = 0.0;
  for (const auto& s : dataset.scenarios) {
    st.x_mean += s.features.colwise().sum().transpose();
    rows += static_cast<double>(n);
  }
  st.x_mean /= rows;
  for (const auto& s : dataset.scenarios)
    st.x_std +=
        (s.features.rowwise() - st.x_mean.transpose()).array().square().colwise().sum().matrix().transpose();
  st.x_std = (st.x_std / rows).cwiseSqrt().cwiseMax(1e-8);

  double ysum = 0.0, yn = 0.0;
  for (const auto& s : dataset.scenarios) {
    ysum += s.pi.sum();
    yn += static_cast<double>(s.pi.size());
  }
  st.y_mean = ysum / yn;
  double yvar = 0.0;
  for (const auto& s : dataset.scenarios)
    yvar += (s.pi.array() - st.y_mean).square().sum();
  st.y_std = std::max(std::sqrt(yvar / yn), 1e-8);
  return st;
}

Dataset normalize(const Dataset& dataset,
                  const std::optional<NormalizationStats>& use) {
  NormalizationStats st = use ? *use : compute_stats(dataset);
  if (st.x_mean.size() != dataset.schema.d())
    throw DimensionMismatchError("stats dimension does not match schema");
  Dataset out = dataset;
  out.stats = st;
  for (auto& s : out.scenarios) {
    for (int c = 0; c < dataset.schema.d(); ++c)
      s.features.col(c) =
          ((s.features.col(c).array() - st.x_mean[c]) / st.x_std[c]).matrix();
    s.pi = ((s.pi.array() - st.y_mean) / st.y_std).matrix();
  }
  return out;
}

Dataset denormalize(const Dataset& dataset) {
  if (!dataset.stats) throw InvalidConfigError("dataset carries no stats");
  const auto& st = *dataset.stats;
  Dataset out = dataset;
  out.stats.reset();
  for (auto& s : out.scenarios) {
    for (int c = 0; c < dataset.schema.d(); ++c)
      s.features.col(c) =
          (s.features.col(c).array() * st.x_std[c] + st.x_mean[c]).matrix();
    s.pi = (s.pi.array() * st.y_std + st.y_mean).matrix();
  }
  return out;
}

Eigen::VectorXd mean_label(const Dataset& dataset) {
  if (dataset.scenarios.empty())
    throw InvalidConfigError("cannot average labels of an empty dataset");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dataset.scenarios.front().pi.size());
  for (const auto& s : dataset.scenarios) mean += s.pi;
  return mean / static_cast<double>(dataset.count());
}

void write_dataset(const Dataset& dataset, const std::string& path,
                   const std::string& tool_version,
                   const std::string& config_digest) {
  if (dataset.stats)
    throw InvalidConfigError("refusing to persist a normalized dataset view");
  std::string columns = "[";
  for (int c = 0; c < dataset.schema.d(); ++c) {
    if (c) columns += ",";
    columns += std::string("\"") + feature_column_name(dataset.schema.columns[c]) +
               "\"";
  }
  columns += "]";

  const int n =
      dataset.scenarios.empty() ? 0 : static_cast<int>(dataset.scenarios[0].features.rows());
  JsonObjectWriter header;
  header.field_string("format", "lmpds");
  header.field_int("version", 1);
  header.field_string("grid_hash", dataset.grid_hash);
  header.field_int("n", n);
  header.field_int("d", dataset.schema.d());
  header.field_raw("columns", columns);
  header.field_int("count", dataset.count());
  if (!tool_version.empty()) header.field_string("tool_version", tool_version);
  if (!config_digest.empty()) header.field_string("config_digest", config_digest);

  std::string out = header.str() + "\n";
  for (const auto& s : dataset.scenarios) {
    JsonObjectWriter row;
    row.field_raw("x", fmt_real_matrix_rows(s.features));
    row.field_raw("pi", fmt_real_vector(s.pi));
    row.field_raw("p", fmt_real_vector(s.p_star));
    row.field_raw("f", fmt_real_vector(s.f_star));
    row.field_real("lambda", s.lambda);
    std::string congested = "[";
    for (std::size_t k = 0; k < s.congested_lines.size(); ++k) {
      if (k) congested += ",";
      congested += std::to_string(s.congested_lines[k]);
    }
    congested += "]";
    row.field_raw("congested", congested);
    out += row.str() + "\n";
  }
  write_text_file(path, out);
}

namespace {

json parse_json_line(const std::string& path, int lineno, const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded())
    throw ParseError(path + ":" + std::to_string(lineno) + ": malformed JSON");
  return j;
}

Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  Eigen::Index i = 0;
  for (const auto& x : a) v[i++] = x.get<double>();
  return v;
}

}  // namespace

Dataset read_dataset(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path + ": empty dataset file");
  ++lineno;
  json header = parse_json_line(path, lineno, line);

  Dataset ds;
  try {
    if (header.at("format").get<std::string>() != "lmpds")
      throw ParseError(path + ": not an lmpds file");
    if (header.at("version").get<int>() != 1)
      throw ParseError(path + ": unsupported dataset version");
    ds.grid_hash = header.at("grid_hash").get<std::string>();
    for (const auto& c : header.at("columns"))
      ds.schema.columns.push_back(feature_column_from_name(c.get<std::string>()));
    const int count = header.at("count").get<int>();
    const int n = header.at("n").get<int>();
    const int d = header.at("d").get<int>();
    if (d != ds.schema.d()) throw ParseError(path + ": header d/columns disagree");

    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json row = parse_json_line(path, lineno, line);
      Scenario s;
      const auto& x = row.at("x");
      if (static_cast<int>(x.size()) != n)
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad row count in x");
      s.features.resize(n, d);
      for (int r = 0; r < n; ++r) {
        const auto& xr = x.at(r);
        if (static_cast<int>(xr.size()) != d)
          throw ParseError(path + ":" + std::to_string(lineno) + ": bad column count in x");
        for (int c = 0; c < d; ++c) s.features(r, c) = xr.at(c).get<double>();
      }
      s.pi = vector_from_json(row.at("pi"));
      s.p_star = vector_from_json(row.at("p"));
      s.f_star = vector_from_json(row.at("f"));
      s.lambda = row.at("lambda").get<double>();
      for (const auto& e : row.at("congested")) s.congested_lines.push_back(e.get<int>());
      if (s.pi.size() != n || s.p_star.size() != n)
        throw ParseError(path + ":" + std::to_string(lineno) + ": label length mismatch");
      ds.scenarios.push_back(std::move(s));
    }
    if (ds.count() != count)
      throw ParseError(path + ": header announces " + std::to_string(count) +
                       " scenarios but " + std::to_string(ds.count()) + " present");
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return ds;
}

Dataset read_dataset(const std::string& path, const Grid& expected_grid) {
  Dataset ds = read_dataset(path);
  const std::string expect = grid_hash(expected_grid);
  if (ds.grid_hash != expect)
    throw SchemaMismatchError("dataset " + path + " was generated against grid " +
                              ds.grid_hash + ", not " + expect);
  return ds;
}

}  // namespace lmplab
