#pragma once

#include "bhom/types.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace bhom {

/// Least-squares slope of log|value| against log(eps).
inline double loglog_slope(std::span<const double> eps, std::span<const double> values) {
  require(eps.size() == values.size() && eps.size() >= 2, "slope fit needs at least two matching samples");
  const std::size_t m = eps.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    require(eps[i] > 0.0 && values[i] != 0.0, "slope fit needs positive eps and nonzero values");
    const double x = std::log(eps[i]), y = std::log(std::abs(values[i]));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = m * sxx - sx * sx;
  require(den != 0.0, "slope fit needs distinct eps values");
  return (m * sxy - sx * sy) / den;
}

struct Extrapolation {
  double limit = 0.0;
  double order = 1.0;   // observed convergence order p in v(eps) = L + C eps^p
  bool observed = false;  // false when the order fell back to p = 1
};

/// Richardson extrapolation of v(eps) -> eps = 0 from the last two samples,
/// with the order p observed from the last three when they are monotone.
/// Samples must be ordered by strictly decreasing eps.
inline Extrapolation richardson(std::span<const double> eps, std::span<const double> values) {
  require(eps.size() == values.size() && !eps.empty(), "extrapolation needs matching samples");
  const std::size_t m = eps.size();
  for (std::size_t i = 1; i < m; ++i) require(eps[i] < eps[i - 1], "eps samples must be strictly decreasing");
  if (m == 1) return {values[0], 1.0, false};
  const double e2 = eps[m - 2], e3 = eps[m - 1];
  const double v2 = values[m - 2], v3 = values[m - 1];
  Extrapolation out;
  out.order = 1.0;
  if (m >= 3) {
    const double e1 = eps[m - 3], v1 = values[m - 3];
    const double d1 = v1 - v2, d2 = v2 - v3;
    if (d1 != 0.0 && d2 != 0.0 && (d1 > 0) == (d2 > 0)) {
      const double target = d1 / d2;
      // Solve (e1^p - e2^p)/(e2^p - e3^p) = target for p by bisection.
      auto ratio = [&](double p) {
        return (std::pow(e1, p) - std::pow(e2, p)) / (std::pow(e2, p) - std::pow(e3, p));
      };
      double lo = 0.05, hi = 12.0;
      const double rlo = ratio(lo), rhi = ratio(hi);
      if ((rlo - target) * (rhi - target) < 0.0) {
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          if ((ratio(lo) - target) * (ratio(mid) - target) <= 0.0)
            hi = mid;
          else
            lo = mid;
        }
        out.order = 0.5 * (lo + hi);
        out.observed = true;
      }
    }
  }
  const double p = out.order;
  const double a2 = std::pow(e2, p), a3 = std::pow(e3, p);
  out.limit = v3 - (v2 - v3) * a3 / (a2 - a3);
  return out;
}

}  // namespace bhom
