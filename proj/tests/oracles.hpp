// Brute-force reference computations shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace oracle {

/// Pointwise supremum of every affine a + b s lying below the samples.
/// Extreme minorants pass through two samples or, with a >= 0 enforced,
/// through the origin; all of them are enumerated and checked.
inline std::vector<double> max_affine_minorant(std::span<const double> s,
                                               std::span<const double> f,
                                               bool nonnegative_intercept) {
  const std::size_t n = s.size();
  std::vector<double> best(n, -std::numeric_limits<double>::infinity());
  auto offer = [&](double a, double b) {
    if (nonnegative_intercept && a < 0) return;
    for (std::size_t k = 0; k < n; ++k)
      if (a + b * s[k] > f[k] + 1e-12 * (1 + std::abs(f[k]))) return;
    for (std::size_t k = 0; k < n; ++k) best[k] = std::max(best[k], a + b * s[k]);
  };
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = p + 1; q < n; ++q) {
      const double b = (f[q] - f[p]) / (s[q] - s[p]);
      offer(f[p] - b * s[p], b);
    }
  if (nonnegative_intercept) {
    double slope = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < n; ++k) slope = std::min(slope, f[k] / s[k]);
    offer(0.0, slope);
  }
  return best;
}

/// min over grid splits k = i + (k - i) of f[i] + f[k - i] on a uniform grid.
inline std::vector<double> min_split(std::span<const double> f) {
  std::vector<double> out(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i <= k; ++i) m = std::min(m, f[i] + f[k - i]);
    out[k] = m;
  }
  return out;
}

}  // namespace oracle
