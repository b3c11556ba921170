#pragma once

#include "bhom/extrapolation.hpp"
#include "bhom/geometry.hpp"
#include "bhom/kernel.hpp"
#include "bhom/quadrature.hpp"
#include "bhom/types.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace bhom {

/// Scalar field on the box, optionally known to be constant.
struct Field {
  std::function<double(const Point&)> fn;
  std::optional<double> constant_value;

  static Field constant(double v) {
    return Field{[v](const Point&) { return v; }, v};
  }
  static Field from(std::function<double(const Point&)> f) { return Field{std::move(f), std::nullopt}; }

  double operator()(const Point& x) const { return fn(x); }
  bool is_constant() const { return constant_value.has_value(); }

  /// Central-difference gradient.
  Vector gradient(const Point& x, double step = 1e-5) const {
    Vector g = Vector::Zero(x.size());
    if (is_constant()) return g;
    for (int i = 0; i < x.size(); ++i) {
      Point xp = x, xm = x;
      xp(i) += step;
      xm(i) -= step;
      g(i) = (fn(xp) - fn(xm)) / (2.0 * step);
    }
    return g;
  }
};

struct QuadratureOptions {
  int radial_order = 32;  // Gauss-Legendre nodes per radial panel
  int polar = 32;         // hemisphere polar nodes
  int azimuth = 64;       // hemisphere azimuth nodes
};

inline void check_order(int order) { require(order >= 3, "quadrature order must be at least 3"); }

/// Local frame of one patch: x = c + gamma y maps Euclidean balls |y| < s onto
/// metric balls d_g(x, c) < s. Sigma is the plane through c normal to e_n.
struct PatchFrame {
  Point center;
  Matrix gamma;
  Matrix gamma_inv;
  double jacobian = 1.0;  // det gamma

  PatchFrame(const CoefficientField& coeff, Point c)
      : center(std::move(c)), gamma(coeff.gamma()), gamma_inv(coeff.gamma().inverse()),
        jacobian(coeff.volume_factor()) {}

  /// Hemisphere directions y with (gamma y)_n >= 0 (points inside D). n = 3.
  quad::HemisphereRule hemisphere(const QuadratureOptions& q) const {
    require(center.size() == 3, "hemisphere quadrature is implemented for n = 3");
    const Eigen::Vector3d pole(gamma(0, 2), gamma(1, 2), gamma(2, 2));
    return quad::hemisphere(pole, q.polar, q.azimuth);
  }

  Point map(double s, const Eigen::Vector3d& dir) const {
    Point y(3);
    y << dir(0), dir(1), dir(2);
    return center + s * (gamma * y);
  }

  /// \int over the half metric shell s0 < d < s1 of f(x) dx (n = 3).
  template <class F>
  double volume(const quad::Rule& radial, const quad::HemisphereRule& hemi, F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
      const double s = radial.nodes[i];
      double shell = 0.0;
      for (std::size_t j = 0; j < hemi.directions.size(); ++j) shell += hemi.weights[j] * f(map(s, hemi.directions[j]));
      acc += radial.weights[i] * s * s * shell;
    }
    return jacobian * acc;
  }

  /// \int over the half metric sphere {d = s} of f(x, nu) dS with nu the
  /// outward unit normal (n = 3).
  template <class F>
  double sphere(double s, const quad::HemisphereRule& hemi, F&& f) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < hemi.directions.size(); ++j) {
      const Eigen::Vector3d& dir = hemi.directions[j];
      Point y(3);
      y << dir(0), dir(1), dir(2);
      const Vector gy = gamma_inv * y;
      const double stretch = gy.norm();
      const Vector nu = gy / stretch;
      acc += hemi.weights[j] * stretch * f(map(s, dir), nu);
    }
    return jacobian * s * s * acc;
  }
};

/// Closed-form corrector omega_eps = sum_k omega_{eps,k}:
///   1 for d <= r_k,  (Phi(d) - eps^{2-n}) / (r_k^{2-n} - eps^{2-n}) for r_k < d < eps,  0 otherwise,
/// with d the metric distance to the patch center.
class Corrector {
 public:
  Corrector(PatchLayout layout, GreenKernel kernel) : layout_(std::move(layout)), kernel_(std::move(kernel)) {
    const int n = layout_.dim();
    require(kernel_.dim() == n, "kernel dimension does not match the layout");
    const double mismatch = (kernel_.coefficients().A() - layout_.metric().A()).cwiseAbs().maxCoeff();
    require(mismatch <= 1e-12, "kernel and layout must share the coefficient matrix");
    const double eps = layout_.epsilon();
    normalizers_.reserve(layout_.size());
    for (std::size_t k = 0; k < layout_.size(); ++k) {
      const double nk = std::pow(layout_.radius(k), 2.0 - n) - std::pow(eps, 2.0 - n);
      require(nk > 0.0, "corrector normalizer must be positive");
      normalizers_.push_back(nk);
    }
    validate_supports();
  }

  const PatchLayout& layout() const { return layout_; }
  const GreenKernel& kernel() const { return kernel_; }
  double normalizer(std::size_t k) const { return normalizers_[k]; }
  int dim() const { return layout_.dim(); }
  double epsilon() const { return layout_.epsilon(); }

  /// Radial profile of patch k at metric distance s.
  double profile(std::size_t k, double s) const {
    if (s <= layout_.radius(k)) return 1.0;
    if (s < epsilon()) return (kernel_.value_at(s) - std::pow(epsilon(), 2.0 - dim())) / normalizers_[k];
    return 0.0;
  }

  /// d(profile)/ds on the annulus.
  double profile_slope(std::size_t k, double s) const { return kernel_.derivative_at(s) / normalizers_[k]; }

  double eval_omega(const Point& x) const {
    const long k = layout_.find_patch_within_eps(x);
    if (k < 0) return 0.0;
    return profile(static_cast<std::size_t>(k), layout_.metric_distance(x, layout_.center(static_cast<std::size_t>(k))));
  }

  struct Gradient {
    Vector value;
    bool on_branch = false;  // x sits on d = r_k or d = eps; value is the annulus-side limit
  };

  Gradient eval_omega_gradient(const Point& x) const {
    Gradient g{Vector::Zero(dim()), false};
    const long kk = layout_.find_patch_within_eps(x, 1.0 + 1e-12);
    if (kk < 0) return g;
    const auto k = static_cast<std::size_t>(kk);
    const Point& c = layout_.center(k);
    const double d = layout_.metric_distance(x, c);
    const double r = layout_.radius(k), eps = epsilon();
    const bool on_inner = std::abs(d - r) <= 1e-12 * r;
    const bool on_outer = std::abs(d - eps) <= 1e-12 * eps;
    if (!on_inner && !on_outer && (d < r || d > eps)) return g;
    g.on_branch = on_inner || on_outer;
    g.value = (profile_slope(k, d) / d) * (kernel_.coefficients().A_inv() * (x - c));
    return g;
  }

  PatchFrame frame(std::size_t k) const { return PatchFrame(kernel_.coefficients(), layout_.center(k)); }

  /// 0.5 * det(gamma) * |S^{n-1}|: turns a radial integral \int f(s) s^{n-1} ds
  /// into the integral over the half metric ball.
  double half_ball_factor() const {
    return 0.5 * kernel_.coefficients().volume_factor() * quad::unit_sphere_area(dim());
  }

 private:
  void validate_supports() const {
    if (layout_.empty()) return;
    const int n = dim();
    const double eps = epsilon();
    const Matrix& A = layout_.metric().A();
    const auto& counts = layout_.lattice_counts();
    // Metric balls of radius eps around lattice neighbours must not overlap.
    for (int i = 0; i + 1 < n; ++i) {
      for (int j = i; j + 1 < n; ++j) {
        for (int si = -2; si <= 2; ++si) {
          for (int sj = -2; sj <= 2; ++sj) {
            if (i == j && sj != 0) continue;
            if (si == 0 && sj == 0) continue;
            if (std::abs(si) >= counts[i] || (i != j && std::abs(sj) >= counts[j])) continue;
            Point v = Point::Zero(n);
            v(i) += 2.0 * eps * si;
            if (i != j) v(j) += 2.0 * eps * sj;
            const double dist = std::sqrt(v.dot(layout_.metric().A_inv() * v));
            require(dist >= 2.0 * eps * (1.0 - 1e-12), "metric balls of radius eps around neighbouring patches overlap");
          }
        }
      }
    }
    // Balls stay inside the box (lateral reach eps * sqrt(A_ii) from centers sitting eps from the faces).
    for (int i = 0; i + 1 < n; ++i)
      require(std::sqrt(A(i, i)) <= 1.0 + 1e-12, "metric balls of radius eps reach across the lateral faces");
    require(eps * std::sqrt(A(n - 1, n - 1)) < layout_.domain().extent(n - 1), "metric balls reach the top face");
  }

  PatchLayout layout_;
  GreenKernel kernel_;
  std::vector<double> normalizers_;
};

/// Per-patch values of a patch-local integral and their sum in patch order.
struct PatchSum {
  double total = 0.0;
  std::vector<double> per_patch;
};

namespace detail {
/// Evaluates fn(k) once per distinct tilde_r and sums in patch order.
template <class Fn>
PatchSum sum_over_patches(const PatchLayout& layout, Fn&& fn) {
  PatchSum out;
  std::map<double, double> cache;
  out.per_patch.reserve(layout.size());
  for (std::size_t k = 0; k < layout.size(); ++k) {
    auto it = cache.find(layout.tilde_r(k));
    if (it == cache.end()) it = cache.emplace(layout.tilde_r(k), fn(k)).first;
    out.per_patch.push_back(it->second);
    out.total += it->second;
  }
  return out;
}
}  // namespace detail

/// \int_D |omega_eps|^2 dx by radial quadrature over each half ball.
inline PatchSum omega_l2(const Corrector& c, int quadrature_order = 32) {
  check_order(quadrature_order);
  const int n = c.dim();
  const double eps = c.epsilon(), factor = c.half_ball_factor();
  return detail::sum_over_patches(c.layout(), [&](std::size_t k) {
    const double r = c.layout().radius(k);
    const double inner = quad::integrate_gl([&](double s) { return std::pow(s, n - 1); }, 0.0, r, quadrature_order);
    const double annulus = quad::integrate_log_adaptive(
        [&](double s) {
          const double w = c.profile(k, s);
          return w * w * std::pow(s, n - 1);
        },
        r, eps, quadrature_order);
    return factor * (inner + annulus);
  });
}

/// \int_D |gamma grad omega_eps|^2 dx. |gamma grad omega|^2 = profile'(d)^2 is radial.
inline PatchSum omega_h1_seminorm(const Corrector& c, int quadrature_order = 32) {
  check_order(quadrature_order);
  const int n = c.dim();
  const double factor = c.half_ball_factor();
  return detail::sum_over_patches(c.layout(), [&](std::size_t k) {
    return factor * quad::integrate_log_adaptive(
                        [&](double s) {
                          const double g = c.profile_slope(k, s);
                          return g * g * std::pow(s, n - 1);
                        },
                        c.layout().radius(k), c.epsilon(), quadrature_order);
  });
}

/// \int_D |gamma grad omega_eps| dx.
inline PatchSum omega_gradient_l1(const Corrector& c, int quadrature_order = 32) {
  check_order(quadrature_order);
  const int n = c.dim();
  const double factor = c.half_ball_factor();
  return detail::sum_over_patches(c.layout(), [&](std::size_t k) {
    return factor * quad::integrate_log_adaptive(
                        [&](double s) { return std::abs(c.profile_slope(k, s)) * std::pow(s, n - 1); },
                        c.layout().radius(k), c.epsilon(), quadrature_order);
  });
}

/// Sum of C_i eps^{i-1}.
inline double eps_series(const std::vector<double>& coeffs, double eps) {
  double acc = 0.0, p = 1.0;
  for (double ci : coeffs) {
    acc += ci * p;
    p *= eps;
  }
  return acc;
}

/// Auxiliary paraboloid q_eps = (kappa_k / 2) (d^2 - eps^2) inside each metric
/// ball B_eps(x_k), zero outside, with
///   kappa_k = (sum_i Ct_i eps^{i-1}) / (eps (tilde_r_k^{2-n} - eps)).
/// On d = eps its conormal flux matches that of omega_eps when Ct equals the
/// kernel's gradient series.
class AuxiliaryFunction {
 public:
  AuxiliaryFunction(PatchLayout layout, std::vector<double> c_tilde = {1.0})
      : layout_(std::move(layout)), c_tilde_(std::move(c_tilde)) {
    require(!c_tilde_.empty(), "auxiliary series needs at least one coefficient");
    for (double v : c_tilde_) require(std::isfinite(v), "auxiliary series coefficients must be finite");
    const int n = layout_.dim();
    const double eps = layout_.epsilon();
    const double s = eps_series(c_tilde_, eps);
    for (std::size_t k = 0; k < layout_.size(); ++k) {
      const double den = eps * (std::pow(layout_.tilde_r(k), 2.0 - n) - eps);
      require(den > 0.0, "auxiliary function scale has a non-positive denominator");
      kappa_.push_back(s / den);
    }
  }

  const PatchLayout& layout() const { return layout_; }
  const std::vector<double>& c_tilde() const { return c_tilde_; }
  double kappa(std::size_t k) const { return kappa_[k]; }

  double eval_q(const Point& x) const {
    const long k = layout_.find_patch_within_eps(x);
    if (k < 0) return 0.0;
    const double d = layout_.metric_distance(x, layout_.center(static_cast<std::size_t>(k)));
    const double eps = layout_.epsilon();
    return 0.5 * kappa_[static_cast<std::size_t>(k)] * (d * d - eps * eps);
  }

  /// grad q = kappa A^{-1}(x - x_k) inside the closed ball, zero outside.
  Vector eval_q_gradient(const Point& x) const {
    const long k = layout_.find_patch_within_eps(x, 1.0 + 1e-12);
    if (k < 0) return Vector::Zero(x.size());
    return kappa_[static_cast<std::size_t>(k)] *
           (layout_.metric().A_inv() * (x - layout_.center(static_cast<std::size_t>(k))));
  }

 private:
  PatchLayout layout_;
  std::vector<double> c_tilde_;
  std::vector<double> kappa_;
};

/// \int_D |grad q_eps|^2 dx. With x = c + gamma y, |grad q|^2 = kappa^2 y^T A^{-1} y,
/// whose hemisphere average is kappa^2 |y|^2 tr(A^{-1}) / n.
inline PatchSum q_gradient_l2(const AuxiliaryFunction& a, int quadrature_order = 32) {
  check_order(quadrature_order);
  const PatchLayout& layout = a.layout();
  const int n = layout.dim();
  const CoefficientField& coeff = layout.metric();
  const double factor = 0.5 * coeff.volume_factor() * quad::unit_sphere_area(n) * coeff.A_inv().trace() / n;
  const double radial =
      quad::integrate_gl([&](double s) { return std::pow(s, n + 1); }, 0.0, layout.epsilon(), quadrature_order);
  PatchSum out;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const double v = factor * a.kappa(k) * a.kappa(k) * radial;
    out.per_patch.push_back(v);
    out.total += v;
  }
  return out;
}

enum class SignMode { Verbatim, PositiveNormalized };

/// Density mu_eps = sum_k coef_k chi_{B_eps(x_k)} with
///   coef_k = (sum_i Ct_i eps^{i-1}) tilde_r_k^{n-2} / (eps tilde_r_k^{n-2} - 1) * tr(A) / eps.
/// Verbatim mode keeps the sign of this expression; positive-normalized mode
/// returns its absolute value.
class MuDensity {
 public:
  MuDensity(PatchLayout layout, std::vector<double> c_tilde = {1.0}, SignMode mode = SignMode::Verbatim)
      : layout_(std::move(layout)), c_tilde_(std::move(c_tilde)), mode_(mode) {
    require(!c_tilde_.empty(), "density series needs at least one coefficient");
    const int n = layout_.dim();
    const double eps = layout_.epsilon();
    const double s = eps_series(c_tilde_, eps);
    const double trace = layout_.metric().trace_A();
    for (std::size_t k = 0; k < layout_.size(); ++k) {
      const double rn = std::pow(layout_.tilde_r(k), n - 2.0);
      const double den = eps * rn - 1.0;
      if (std::abs(den) < 1e-14) throw DomainError("mu_eps: degenerate denominator eps * tilde_r^{n-2} = 1");
      double v = s * rn / den * trace / eps;
      if (mode_ == SignMode::PositiveNormalized) v = std::abs(v);
      coef_.push_back(v);
    }
  }

  const PatchLayout& layout() const { return layout_; }
  SignMode sign_mode() const { return mode_; }
  const std::vector<double>& c_tilde() const { return c_tilde_; }
  double coefficient(std::size_t k) const { return coef_[k]; }

  double eval_mu_eps(const Point& x) const {
    if (x(layout_.dim() - 1) < 0.0) return 0.0;
    const long k = layout_.find_patch_within_eps(x);
    return k < 0 ? 0.0 : coef_[static_cast<std::size_t>(k)];
  }

 private:
  PatchLayout layout_;
  std::vector<double> c_tilde_;
  SignMode mode_;
  std::vector<double> coef_;
};

/// \int_D mu_eps zeta dx over the half metric balls. Non-constant zeta uses
/// the hemisphere product rule (n = 3).
inline double mu_weak_pairing(const MuDensity& m, const Field& zeta, const QuadratureOptions& q = {}) {
  check_order(q.radial_order);
  const PatchLayout& layout = m.layout();
  const int n = layout.dim();
  const double eps = layout.epsilon();
  double total = 0.0;
  if (zeta.is_constant()) {
    const double vol = 0.5 * layout.metric().volume_factor() * quad::unit_ball_volume(n) * std::pow(eps, n);
    for (std::size_t k = 0; k < layout.size(); ++k) total += m.coefficient(k) * *zeta.constant_value * vol;
    return total;
  }
  require(n == 3, "mu_weak_pairing with a non-constant field is implemented for n = 3");
  const quad::Rule radial = quad::mapped(quad::gauss_legendre(q.radial_order), 0.0, eps);
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const PatchFrame fr(layout.metric(), layout.center(k));
    const auto hemi = fr.hemisphere(q);
    total += m.coefficient(k) * fr.volume(radial, hemi, [&](const Point& x) { return zeta(x); });
  }
  return total;
}

struct DensityLimit {
  std::vector<double> eps;
  std::vector<double> values;  // mu_weak_pairing(zeta = 1) / area(Sigma)
  double limit = 0.0;
  double order = 1.0;
};

/// Surface density mu of the limit problem: Richardson extrapolation of the
/// normalized pairing <mu_eps, 1> / |Sigma| over a decreasing eps sequence.
inline DensityLimit limit_density(const DomainSpec& spec, const std::vector<double>& tilde_r, double c1, double c2,
                                  const CoefficientField& coeff, const std::vector<double>& c_tilde, SignMode mode,
                                  const std::vector<double>& eps_list, const QuadratureOptions& q = {}) {
  require(!tilde_r.empty(), "tilde_r must be given");
  for (double t : tilde_r)
    require(t == tilde_r.front(), "limit_density needs a uniform tilde_r (the limit is x-dependent otherwise)");
  require(!eps_list.empty(), "limit_density needs at least one eps");
  DensityLimit out;
  out.eps = eps_list;
  for (double eps : eps_list) {
    const PatchLayout layout = build_layout(spec, eps, {tilde_r.front()}, c1, c2, coeff);
    const MuDensity mu(layout, c_tilde, mode);
    out.values.push_back(mu_weak_pairing(mu, Field::constant(1.0), q) / spec.sigma_area());
  }
  const Extrapolation ex = richardson(out.eps, out.values);
  out.limit = ex.limit;
  out.order = ex.order;
  return out;
}

}  // namespace bhom
