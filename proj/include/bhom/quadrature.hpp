#pragma once

#include "bhom/types.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace bhom::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule with `order` nodes on [-1, 1].
inline Rule gauss_legendre(int order) {
  require(order >= 1, "Gauss-Legendre order must be positive");
  Rule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const int half = (order + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= order; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = order * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0, p1 = 0.0;
    for (int j = 1; j <= order; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
    }
    dp = order * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = -z;
    rule.nodes[order - 1 - i] = z;
    rule.weights[i] = w;
    rule.weights[order - 1 - i] = w;
  }
  return rule;
}

/// Rule mapped affinely onto [a, b].
inline Rule mapped(const Rule& ref, double a, double b) {
  Rule out;
  out.nodes.resize(ref.nodes.size());
  out.weights.resize(ref.nodes.size());
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
    out.nodes[i] = mid + half * ref.nodes[i];
    out.weights[i] = half * ref.weights[i];
  }
  return out;
}

/// Composite rule on [a, b] with 0 < a < b, Gauss-Legendre in log-radius.
/// Panels have radius ratio at most `max_ratio`. Power laws become
/// exponentials under the substitution, so a few panels integrate
/// annulus profiles to machine precision.
inline Rule log_radial(double a, double b, int order, double max_ratio = 4.0) {
  require(a > 0.0 && b > a, "log-radial rule needs 0 < a < b");
  const Rule ref = gauss_legendre(order);
  const double la = std::log(a), lb = std::log(b);
  const int panels = std::max(1, static_cast<int>(std::ceil((lb - la) / std::log(max_ratio) - 1e-12)));
  Rule out;
  for (int p = 0; p < panels; ++p) {
    const double t0 = la + (lb - la) * p / panels;
    const double t1 = la + (lb - la) * (p + 1) / panels;
    const Rule m = mapped(ref, t0, t1);
    for (std::size_t i = 0; i < m.nodes.size(); ++i) {
      const double s = std::exp(m.nodes[i]);
      out.nodes.push_back(s);
      out.weights.push_back(m.weights[i] * s);
    }
  }
  return out;
}

namespace detail {
inline double adaptive_log(const std::function<double(double)>& f, const Rule& ref, double t0, double t1,
                           double whole, double tol, int depth) {
  auto panel = [&](double u0, double u1) {
    const Rule m = mapped(ref, u0, u1);
    double acc = 0.0;
    for (std::size_t i = 0; i < m.nodes.size(); ++i) {
      const double s = std::exp(m.nodes[i]);
      acc += m.weights[i] * s * f(s);
    }
    return acc;
  };
  const double tm = 0.5 * (t0 + t1);
  const double left = panel(t0, tm), right = panel(tm, t1);
  const double refined = left + right;
  if (depth <= 0 || std::abs(refined - whole) <= tol * std::max(std::abs(refined), 1e-300)) return refined;
  return adaptive_log(f, ref, t0, tm, left, tol, depth - 1) + adaptive_log(f, ref, tm, t1, right, tol, depth - 1);
}
}  // namespace detail

/// Adaptive Gauss-Legendre in log-radius for \int_a^b f(s) ds, 0 < a < b.
inline double integrate_log_adaptive(const std::function<double(double)>& f, double a, double b, int order,
                                     double rel_tol = 1e-14, int max_depth = 24) {
  require(a > 0.0 && b > a, "adaptive log-radial integration needs 0 < a < b");
  const Rule ref = gauss_legendre(order);
  const double t0 = std::log(a), t1 = std::log(b);
  const Rule m = mapped(ref, t0, t1);
  double whole = 0.0;
  for (std::size_t i = 0; i < m.nodes.size(); ++i) {
    const double s = std::exp(m.nodes[i]);
    whole += m.weights[i] * s * f(s);
  }
  return detail::adaptive_log(f, ref, t0, t1, whole, rel_tol, max_depth);
}

/// Gauss-Legendre on [a, b] (polynomial integrands).
inline double integrate_gl(const std::function<double(double)>& f, double a, double b, int order) {
  const Rule m = mapped(gauss_legendre(order), a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.nodes.size(); ++i) acc += m.weights[i] * f(m.nodes[i]);
  return acc;
}

/// Surface measure of the unit sphere S^{n-1} in R^n.
inline double unit_sphere_area(int n) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

/// Volume of the unit ball in R^n.
inline double unit_ball_volume(int n) { return unit_sphere_area(n) / n; }

/// Directions on the unit hemisphere {y : y . pole >= 0} in R^3 with weights
/// summing to 2*pi: Gauss in cos(polar angle) times trapezoid in azimuth.
struct HemisphereRule {
  std::vector<Eigen::Vector3d> directions;
  std::vector<double> weights;
};

inline HemisphereRule hemisphere(const Eigen::Vector3d& pole, int polar, int azimuth) {
  require(polar >= 1 && azimuth >= 3, "hemisphere rule needs polar >= 1 and azimuth >= 3");
  const Eigen::Vector3d m = pole.normalized();
  Eigen::Vector3d t = std::abs(m.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d e1 = (t - t.dot(m) * m).normalized();
  const Eigen::Vector3d e2 = m.cross(e1);
  const Rule cz = mapped(gauss_legendre(polar), 0.0, 1.0);
  HemisphereRule out;
  out.directions.reserve(static_cast<std::size_t>(polar) * azimuth);
  out.weights.reserve(static_cast<std::size_t>(polar) * azimuth);
  const double dphi = 2.0 * std::numbers::pi / azimuth;
  for (int i = 0; i < polar; ++i) {
    const double c = cz.nodes[i];
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    for (int j = 0; j < azimuth; ++j) {
      const double phi = (j + 0.5) * dphi;
      out.directions.push_back(c * m + s * (std::cos(phi) * e1 + std::sin(phi) * e2));
      out.weights.push_back(cz.weights[i] * dphi);
    }
  }
  return out;
}

}  // namespace bhom::quad
