#pragma once

#include <omp.h>

#include <algorithm>

namespace lmplab {

/// Worker count for batch kernels. 0 or negative means "all hardware
/// threads"; 1 selects the serial reference path (no OpenMP region at
/// all), which is the bit-reproducibility baseline.
inline int resolve_threads(int requested) {
  if (requested == 1) return 1;
  int hw = omp_get_max_threads();
  if (requested <= 0) return std::max(1, hw);
  return std::min(requested, std::max(1, hw));
}

/// Data-parallel index loop. Every call site stores per-index results
/// into preallocated slots and reduces them in index order afterwards,
/// so the OpenMP path returns bit-identical results to the serial one.
template <typename F>
void parallel_for(int n, int threads, F&& body) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (int i = 0; i < n; ++i) body(i);
}

}  // namespace lmplab
