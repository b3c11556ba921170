#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the library's quadrature or solvers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace oracle {

inline constexpr double pi = std::numbers::pi;

/// n = 3, gamma = I, radial corrector (1/d - 1/eps)/(1/r - 1/eps) on a half ball.
inline double omega_energy_half_ball(double r, double eps) { return 2.0 * pi / (1.0 / r - 1.0 / eps); }

/// \int |omega|^2 over the half ball of radius eps, closed form.
inline double omega_l2_half_ball(double r, double eps) { return 2.0 * pi * r * r * eps / 3.0; }

/// \int |grad omega| over the half ball.
inline double omega_grad_l1_half_ball(double r, double eps) { return 2.0 * pi * (eps - r) / (1.0 / r - 1.0 / eps); }

/// kappa for n = 3 with a single auxiliary coefficient ct.
inline double kappa3(double ct, double tilde_r, double eps) { return ct / (eps * (1.0 / tilde_r - eps)); }

/// \int |grad q|^2 over the half ball.
inline double q_energy_half_ball(double kappa, double eps) { return kappa * kappa * 2.0 * pi * std::pow(eps, 5) / 5.0; }

/// Simpson rule on [a, b] with m (even) panels.
template <class F>
double simpson(F&& f, double a, double b, int m) {
  const double h = (b - a) / m;
  double s = f(a) + f(b);
  for (int i = 1; i < m; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Robin slab: minimizer of b^2 + kappa (phi - b)_-^2 over the trace b,
/// top value psi = 0, unit height. Returns the trace on Sigma.
inline double slab_trace(double kappa, double phi) {
  if (phi <= 0.0) return 0.0;
  return kappa * phi / (1.0 + kappa);
}

inline double slab_energy(double kappa, double phi) {
  const double b = slab_trace(kappa, phi);
  const double neg = std::max(phi - b, 0.0);
  return b * b + kappa * neg * neg;
}

/// Accelerated projected gradient for min x^T K x subject to x_i fixed where
/// mask == 1 and x_i >= lower_i where lower is finite. K is given row-wise
/// in CSR form. Stops when the projected-gradient step changes x by less than tol.
struct Csr {
  std::size_t n;
  const std::vector<std::size_t>* row_ptr;
  const std::vector<std::uint32_t>* cols;
  const std::vector<double>* vals;

  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t p = (*row_ptr)[i]; p < (*row_ptr)[i + 1]; ++p) s += (*vals)[p] * x[(*cols)[p]];
      y[i] = s;
    }
  }
  double gershgorin() const {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t p = (*row_ptr)[i]; p < (*row_ptr)[i + 1]; ++p) s += std::abs((*vals)[p]);
      m = std::max(m, s);
    }
    return m;
  }
};

inline std::vector<double> projected_gradient(const Csr& K, std::vector<double> x, const std::vector<std::uint8_t>& fixed,
                                              const std::vector<double>& lower, double tol, int max_iter,
                                              int* iterations = nullptr) {
  const std::size_t n = K.n;
  const double step = 1.0 / (2.0 * K.gershgorin());
  auto project = [&](std::vector<double>& v, const std::vector<double>& ref) {
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed[i]) v[i] = ref[i];
      else if (std::isfinite(lower[i])) v[i] = std::max(v[i], lower[i]);
    }
  };
  const std::vector<double> ref = x;
  project(x, ref);
  std::vector<double> y = x, g(n), xn(n);
  double t = 1.0;
  int it = 0;
  for (; it < max_iter; ++it) {
    K.apply(y, g);
    for (std::size_t i = 0; i < n; ++i) xn[i] = y[i] - step * 2.0 * g[i];
    project(xn, ref);
    double change = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      change = std::max(change, std::abs(xn[i] - x[i]));
      dot += (y[i] - xn[i]) * (xn[i] - x[i]);
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if (dot > 0.0) {  // adaptive restart
      y = xn;
      t = 1.0;
    } else {
      for (std::size_t i = 0; i < n; ++i) y[i] = xn[i] + (t - 1.0) / tn * (xn[i] - x[i]);
      t = tn;
    }
    x.swap(xn);
    if (change < tol) break;
  }
  if (iterations) *iterations = it;
  return x;
}

}  // namespace oracle
