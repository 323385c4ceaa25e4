#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ptrack/grid.hpp"
#include "ptrack/rng.hpp"

namespace ptrack::testing {

inline Grid2D random_grid(int c, int h, int w, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  Grid2D g(c, h, w);
  for (double& v : g.data()) v = rng.uniform(lo, hi);
  return g;
}

/// |a - b| / max(|a|, |b|) over whole vectors; 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Distinct indices in [0, n), at most `k`, in ascending order.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, CounterRng& rng) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (k >= n) return all;
  shuffle(std::span<std::size_t>(all), rng);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace ptrack::testing
