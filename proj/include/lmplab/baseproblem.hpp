#pragma once

#include <cstdint>

#include "lmplab/dcopf.hpp"

namespace lmplab {

/// Canonical randomized OPF instance on a grid: roughly 45% of the
/// nodes become quadratic-cost generators, the rest fixed loads, with
/// total generation capacity scaled to 1.6x total load. Deterministic
/// in the seed; the congestion level is steered by the grid's flow
/// limits (grid-gen --limit-scale).
DcOpfProblem make_base_problem(const Grid& grid, std::uint64_t seed);

}  // namespace lmplab
