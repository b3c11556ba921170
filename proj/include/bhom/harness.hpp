#pragma once

#include "bhom/corrector.hpp"
#include "bhom/extrapolation.hpp"
#include "bhom/fem.hpp"
#include "bhom/geometry.hpp"
#include "bhom/kernel.hpp"
#include "bhom/quadrature.hpp"
#include "bhom/types.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace bhom {

/// One member of the test family for v.
struct VField {
  enum class Kind { Zero, One, OneMinusOmega, Custom };
  std::string name;
  Kind kind = Kind::One;
  Field field = Field::constant(1.0);

  static VField zero() { return {"0", Kind::Zero, Field::constant(0.0)}; }
  static VField one() { return {"1", Kind::One, Field::constant(1.0)}; }
  static VField one_minus_omega() { return {"1-omega", Kind::OneMinusOmega, Field::constant(0.0)}; }
  static VField custom(std::string name, Field f) { return {std::move(name), Kind::Custom, std::move(f)}; }

  double operator()(const Corrector& c, const Point& x) const {
    switch (kind) {
      case Kind::Zero: return 0.0;
      case Kind::One: return 1.0;
      case Kind::OneMinusOmega: return 1.0 - c.eval_omega(x);
      case Kind::Custom: return field(x);
    }
    return 0.0;
  }

  /// v vanishes on T_eps for every eps.
  bool vanishes_on_patches() const { return kind == Kind::Zero || kind == Kind::OneMinusOmega; }
};

/// Test data for the lemma checks: phi_test with phi_test = 0 on Gamma and the
/// v family.
struct TestFunctionSpec {
  std::string phi_name = "1 - x3";
  Field phi = Field::from([](const Point& x) { return 1.0 - x(x.size() - 1); });
  std::vector<VField> v = {VField::zero(), VField::one(), VField::one_minus_omega()};
  double v_bound = 10.0;

  /// Samples phi on Gamma faces and the custom v fields on the box.
  void validate(const DomainSpec& spec) const {
    const int n = spec.n;
    const int m = 9;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(m);
    for (std::size_t k = 0; k < total; ++k) {
      std::size_t rest = k;
      Point x(n);
      bool on_gamma = false;
      for (int i = 0; i < n; ++i) {
        idx[i] = static_cast<int>(rest % m);
        rest /= m;
        x(i) = spec.extent(i) * idx[i] / (m - 1.0);
      }
      on_gamma = idx[n - 1] == m - 1;
      if (!spec.lateral_periodic())
        for (int i = 0; i + 1 < n; ++i) on_gamma = on_gamma || idx[i] == 0 || idx[i] == m - 1;
      if (on_gamma && std::abs(phi(x)) > 1e-12)
        throw DomainError("phi_test must vanish on Gamma (value " + std::to_string(phi(x)) + " found)");
      for (const VField& f : v) {
        if (f.kind != VField::Kind::Custom) continue;
        const double val = f.field(x);
        if (!std::isfinite(val) || std::abs(val) > v_bound)
          throw DomainError("test field v = " + f.name + " exceeds the configured bound");
      }
    }
  }
};

struct LemmaCheckEntry {
  std::string name;
  std::vector<double> eps;
  std::vector<double> values;
  double limit = 0.0;
  double target = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::string note;
  std::map<std::string, std::vector<double>> extra;
};

struct LemmaError {
  std::string name;
  std::string message;
};

struct LemmaCheckReport {
  std::vector<LemmaCheckEntry> entries;
  std::vector<LemmaError> errors;

  bool all_pass() const {
    if (!errors.empty()) return false;
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
  const LemmaCheckEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

/// Shared inputs of the lemma checks: one corrector, auxiliary function and
/// density per eps.
struct LemmaContext {
  DomainSpec spec = DomainSpec::unit_box(3, BoundaryMode::PeriodicTop);
  std::vector<double> eps_list = {0.25, 0.125, 0.0625};
  double tilde_r = 1.0, c1 = 0.5, c2 = 2.0;
  CoefficientField coeff = CoefficientField::identity(3);
  std::vector<double> kernel_c = {1.0};
  std::vector<double> kernel_c_prime = {};
  std::vector<double> c_tilde = {1.0};
  QuadratureOptions quad;
  std::optional<double> mu_limit;  // positive-normalized surface density; computed when empty

  struct Level {
    double eps;
    Corrector omega;
    AuxiliaryFunction q;
    MuDensity mu;
  };

  std::vector<Level> levels() const {
    require(spec.n == 3, "the lemma checks use hemisphere quadrature and need n = 3");
    std::vector<Level> out;
    for (double eps : eps_list) {
      const PatchLayout layout = build_layout(spec, eps, {tilde_r}, c1, c2, coeff);
      out.push_back(Level{eps, Corrector(layout, GreenKernel(coeff, kernel_c, kernel_c_prime)),
                          AuxiliaryFunction(layout, c_tilde), MuDensity(layout, c_tilde, SignMode::Verbatim)});
    }
    return out;
  }

  double density_limit() const {
    if (mu_limit) return *mu_limit;
    return limit_density(spec, {tilde_r}, c1, c2, coeff, c_tilde, SignMode::PositiveNormalized, eps_list, quad).limit;
  }
};

namespace detail {

inline quad::Rule concat(const quad::Rule& a, const quad::Rule& b) {
  quad::Rule out = a;
  out.nodes.insert(out.nodes.end(), b.nodes.begin(), b.nodes.end());
  out.weights.insert(out.weights.end(), b.weights.begin(), b.weights.end());
  return out;
}

/// \int_Sigma f dS by tensor Gauss on the lateral box.
inline double sigma_integral(const DomainSpec& spec, const Field& f, int order = 16, int panels = 8) {
  const int m = spec.n - 1;
  if (f.is_constant()) return *f.constant_value * spec.sigma_area();
  const quad::Rule ref = quad::gauss_legendre(order);
  std::vector<quad::Rule> axes;
  for (int i = 0; i < m; ++i) {
    quad::Rule r;
    for (int p = 0; p < panels; ++p)
      r = concat(r, quad::mapped(ref, spec.extent(i) * p / panels, spec.extent(i) * (p + 1) / panels));
    axes.push_back(r);
  }
  std::size_t total = 1;
  for (const auto& r : axes) total *= r.nodes.size();
  double acc = 0.0;
  Point x = Point::Zero(spec.n);
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t rest = k;
    double w = 1.0;
    for (int i = 0; i < m; ++i) {
      const std::size_t j = rest % axes[i].nodes.size();
      rest /= axes[i].nodes.size();
      x(i) = axes[i].nodes[j];
      w *= axes[i].weights[j];
    }
    acc += w * f(x);
  }
  return acc;
}

inline double relative_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

inline bool all_zero(const std::vector<double>& v, double tol = 0.0) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return std::abs(x) <= tol; });
}

inline double safe_limit(const std::vector<double>& eps, const std::vector<double>& values) {
  return richardson(eps, values).limit;
}

}  // namespace detail

/// Conormal flux of omega through the half sphere d = s of patch k, weighted
/// by v phi. Uses the annulus-side gradient; `inward` flips the normal.
inline double sphere_flux(const Corrector& c, std::size_t k, double s, bool inward, const VField& v, const Field& phi,
                          const QuadratureOptions& q) {
  const PatchFrame fr = c.frame(k);
  const auto hemi = fr.hemisphere(q);
  const double slope = c.profile_slope(k, s);
  const Point& ctr = c.layout().center(k);
  const double sign = inward ? -1.0 : 1.0;
  return fr.sphere(s, hemi, [&](const Point& x, const Vector& nu) {
    // A grad omega = slope / s (x - c).
    const double flux = slope / s * (x - ctr).dot(nu);
    return sign * flux * v(c, x) * phi(x);
  });
}

/// \int over Sigma cut with the metric annulus r_k < d < eps of
/// (gamma grad omega).(gamma nu) v phi, nu = -e_n.
inline double sigma_annulus_flux(const Corrector& c, std::size_t k, const VField& v, const Field& phi,
                                 const QuadratureOptions& q) {
  const int n = c.dim();
  const Matrix& Ainv = c.layout().metric().A_inv();
  const Matrix& A = c.layout().metric().A();
  // Metric on the plane: B = (A^{-1}) restricted to the lateral axes, B = L L^T.
  const Matrix B = Ainv.topLeftCorner(n - 1, n - 1);
  const Eigen::LLT<Matrix> llt(B);
  const Matrix LinvT = llt.matrixU().solve(Matrix::Identity(n - 1, n - 1));
  const double jac = std::abs(LinvT.determinant());
  const double r = c.layout().radius(k), eps = c.epsilon();
  const quad::Rule radial = quad::log_radial(r, eps, q.radial_order);
  const Point& ctr = c.layout().center(k);
  Vector nu = Vector::Zero(n);
  nu(n - 1) = -1.0;
  const Vector Anu = A * nu;
  require(n == 3, "Sigma flux quadrature is implemented for n = 3");
  const int m = q.azimuth;
  double acc = 0.0;
  for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
    const double rho = radial.nodes[i];
    for (int j = 0; j < m; ++j) {
      const double th = (j + 0.5) * 2.0 * std::numbers::pi / m;
      Vector w(2);
      w << std::cos(th), std::sin(th);
      const Vector u = rho * (LinvT * w);
      Point x = ctr;
      x(0) += u(0);
      x(1) += u(1);
      x(2) = ctr(2);
      const Vector g = (c.profile_slope(k, rho) / rho) * (Ainv * (x - ctr));
      acc += radial.weights[i] * (2.0 * std::numbers::pi / m) * rho * jac * g.dot(Anu) * v(c, x) * phi(x);
    }
  }
  return acc;
}

/// \int_D |gamma grad omega|^2 phi dx against mu * \int_Sigma phi dS.
inline LemmaCheckEntry check_le2(const LemmaContext& ctx, const std::vector<LemmaContext::Level>& levels,
                                 const TestFunctionSpec& tf) {
  LemmaCheckEntry e;
  e.name = "le2";
  e.tol = 0.05;
  const double mu = ctx.density_limit();
  e.target = mu * detail::sigma_integral(ctx.spec, tf.phi);
  for (const auto& lv : levels) {
    const Corrector& c = lv.omega;
    double total = 0.0;
    for (std::size_t k = 0; k < c.layout().size(); ++k) {
      const PatchFrame fr = c.frame(k);
      const auto hemi = fr.hemisphere(ctx.quad);
      const quad::Rule radial = quad::log_radial(c.layout().radius(k), c.epsilon(), ctx.quad.radial_order);
      const Point& ctr = c.layout().center(k);
      total += fr.volume(radial, hemi, [&](const Point& x) {
        const double s = c.layout().metric_distance(x, ctr);
        const double g = c.profile_slope(k, s);
        return g * g * tf.phi(x);
      });
    }
    e.eps.push_back(lv.eps);
    e.values.push_back(total);
    e.extra["relative_gap"].push_back(detail::relative_gap(total, e.target));
  }
  if (detail::all_zero(e.values) && e.target == 0.0) {
    e.pass = true;
    e.note = "phi_test = 0: both sides vanish";
    return e;
  }
  e.limit = detail::safe_limit(e.eps, e.values);
  e.pass = detail::relative_gap(e.limit, e.target) <= e.tol;
  e.note = "extrapolated left side against mu * int_Sigma phi_test";
  return e;
}

/// Inner flux through the half spheres d = r_k with the normal pointing into B_{r_k}.
inline LemmaCheckEntry check_inner_flux(const LemmaContext& ctx, const std::vector<LemmaContext::Level>& levels,
                                        const VField& v, const TestFunctionSpec& tf) {
  LemmaCheckEntry e;
  e.name = "E1[v=" + v.name + "]";
  e.tol = 0.05;
  e.target = 0.0;
  bool nonnegative = true;
  for (const auto& lv : levels) {
    const Corrector& c = lv.omega;
    double total = 0.0;
    for (std::size_t k = 0; k < c.layout().size(); ++k)
      total += sphere_flux(c, k, c.layout().radius(k), true, v, tf.phi, ctx.quad);
    if (v.kind == VField::Kind::Custom) {
      // Precondition: v >= 0 on T_eps, sampled on the patch spheres.
      const PatchFrame fr = c.frame(0);
      const auto hemi = fr.hemisphere(QuadratureOptions{8, 8, 16});
      for (std::size_t k = 0; k < c.layout().size(); ++k) {
        const PatchFrame fk = c.frame(k);
        for (const auto& dir : hemi.directions)
          if (v(c, fk.map(c.layout().radius(k), dir)) < -1e-12) nonnegative = false;
      }
    }
    e.eps.push_back(lv.eps);
    e.values.push_back(total);
    if (v.kind == VField::Kind::One && ctx.coeff.is_identity() && tf.phi.is_constant()) {
      double closed = 0.0;
      for (std::size_t k = 0; k < c.layout().size(); ++k) closed += 2.0 * std::numbers::pi / c.normalizer(k);
      e.extra["closed_form"].push_back(closed * *tf.phi.constant_value);
    }
  }
  e.limit = detail::safe_limit(e.eps, e.values);
  if (!nonnegative) {
    e.pass = false;
    e.note = "precondition violated: v is negative on T_eps";
    return e;
  }
  e.pass = e.values.back() >= -e.tol && e.limit >= -e.tol;
  e.note = "lower bound: smallest-eps value and extrapolated liminf >= -tol";
  return e;
}

/// Flux through Sigma inside the annuli; identically zero on a flat Sigma.
inline LemmaCheckEntry check_boundary_flux_E2(const LemmaContext& ctx, const std::vector<LemmaContext::Level>& levels,
                                              const VField& v, const TestFunctionSpec& tf) {
  LemmaCheckEntry e;
  e.name = "E2[v=" + v.name + "]";
  e.tol = 1e-12;
  e.target = 0.0;
  for (const auto& lv : levels) {
    double total = 0.0;
    for (std::size_t k = 0; k < lv.omega.layout().size(); ++k)
      total += sigma_annulus_flux(lv.omega, k, v, tf.phi, ctx.quad);
    e.eps.push_back(lv.eps);
    e.values.push_back(total);
  }
  e.limit = e.values.back();
  e.pass = detail::all_zero(e.values, e.tol);
  e.note = "exact zero on flat Sigma";
  return e;
}

/// Diagnostic: the same Sigma flux with every center lifted by delta above
/// Sigma (gamma = I). Nonzero and shrinking with delta.
inline LemmaCheckEntry check_boundary_flux_lifted(const LemmaContext& ctx, const LemmaContext::Level& lv,
                                                  const VField& v, const TestFunctionSpec& tf,
                                                  const std::vector<double>& deltas = {1e-3, 5e-4, 2.5e-4}) {
  require(ctx.coeff.is_identity(), "the lifted-center diagnostic assumes gamma = I");
  LemmaCheckEntry e;
  e.name = "E2_lifted[v=" + v.name + "]";
  e.tol = 0.0;
  const Corrector& c = lv.omega;
  const double eps = c.epsilon();
  const int m = ctx.quad.azimuth;
  for (double delta : deltas) {
    require(delta < eps, "lift must stay below eps");
    double total = 0.0;
    for (std::size_t k = 0; k < c.layout().size(); ++k) {
      const double r = c.layout().radius(k);
      Point ctr = c.layout().center(k);
      ctr(2) += delta;
      // Sigma points at planar distance rho with d = sqrt(rho^2 + delta^2) in (r, eps).
      const double rho0 = delta < r ? std::sqrt(r * r - delta * delta) : 0.0;
      const double rho1 = std::sqrt(eps * eps - delta * delta);
      const quad::Rule radial = rho0 > 0.0 ? quad::log_radial(rho0, rho1, ctx.quad.radial_order)
                                           : quad::mapped(quad::gauss_legendre(ctx.quad.radial_order), 0.0, rho1);
      for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
        const double rho = radial.nodes[i];
        const double d = std::sqrt(rho * rho + delta * delta);
        for (int j = 0; j < m; ++j) {
          const double th = (j + 0.5) * 2.0 * std::numbers::pi / m;
          Point x(3);
          x << ctr(0) + rho * std::cos(th), ctr(1) + rho * std::sin(th), 0.0;
          // grad omega . nu with nu = -e_3: slope / d * (x - ctr) . nu = slope / d * delta.
          const double flux = c.profile_slope(k, d) / d * delta;
          total += radial.weights[i] * (2.0 * std::numbers::pi / m) * rho * flux * v(c, x) * tf.phi(x);
        }
      }
    }
    e.eps.push_back(eps);
    e.values.push_back(total);
    e.extra["delta"].push_back(delta);
  }
  bool shrinking = true;
  for (std::size_t i = 0; i < e.values.size(); ++i) {
    if (e.values[i] == 0.0) shrinking = v.kind == VField::Kind::Zero;
    if (i > 0 && !(std::abs(e.values[i]) < std::abs(e.values[i - 1]))) shrinking = v.kind == VField::Kind::Zero;
  }
  e.limit = e.values.back();
  e.pass = shrinking;
  e.note = "diagnostic at the smallest eps: centers lifted by delta; eps column repeats that eps";
  return e;
}

/// Largest pointwise relative mismatch between the conormal fluxes of q_eps
/// and omega_eps on the outer half spheres d = eps.
inline double outer_flux_identity_mismatch(const std::vector<LemmaContext::Level>& levels, const QuadratureOptions& q) {
  double worst = 0.0;
  for (const auto& lv : levels) {
    const Corrector& c = lv.omega;
    for (std::size_t k = 0; k < c.layout().size(); ++k) {
      const PatchFrame fr = c.frame(k);
      const auto hemi = fr.hemisphere(QuadratureOptions{q.radial_order, std::min(q.polar, 8), std::min(q.azimuth, 16)});
      const Matrix& A = c.layout().metric().A();
      for (const auto& dir : hemi.directions) {
        const Point x = fr.map(c.epsilon(), dir);
        const Vector nu = (fr.gamma_inv * Vector(Eigen::Vector3d(dir))).normalized();
        const double fq = (A * lv.q.eval_q_gradient(x)).dot(nu);
        const Vector gw = c.eval_omega_gradient(x).value;
        const double fw = (A * gw).dot(nu);
        const double scale = std::max(std::abs(fw), 1e-300);
        worst = std::max(worst, std::abs(fq - fw) / scale);
      }
    }
  }
  return worst;
}

/// Outer flux through d = eps against -\int phi v mu_eps dx (verbatim sign).
inline LemmaCheckEntry check_outer_flux_E3(const LemmaContext& ctx, const std::vector<LemmaContext::Level>& levels,
                                           const VField& v, const TestFunctionSpec& tf) {
  LemmaCheckEntry e;
  e.name = "E3[v=" + v.name + "]";
  e.tol = 0.05;
  for (const auto& lv : levels) {
    const Corrector& c = lv.omega;
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t k = 0; k < c.layout().size(); ++k) {
      lhs += sphere_flux(c, k, c.epsilon(), false, v, tf.phi, ctx.quad);
      const PatchFrame fr = c.frame(k);
      const auto hemi = fr.hemisphere(ctx.quad);
      const double r = c.layout().radius(k);
      const quad::Rule radial = detail::concat(quad::mapped(quad::gauss_legendre(ctx.quad.radial_order), 0.0, r),
                                               quad::log_radial(r, c.epsilon(), ctx.quad.radial_order));
      rhs -= lv.mu.coefficient(k) * fr.volume(radial, hemi, [&](const Point& x) { return tf.phi(x) * v(c, x); });
    }
    e.eps.push_back(lv.eps);
    e.values.push_back(lhs);
    e.extra["rhs"].push_back(rhs);
    e.extra["relative_gap"].push_back(detail::relative_gap(lhs, rhs));
  }
  const auto& gaps = e.extra["relative_gap"];
  const auto& rhs = e.extra["rhs"];
  e.target = rhs.back();
  e.limit = detail::all_zero(e.values) ? 0.0 : detail::safe_limit(e.eps, e.values);
  if (v.vanishes_on_patches()) {
    bool shrinking = true;
    for (std::size_t i = 1; i < gaps.size(); ++i)
      if (!(gaps[i] < gaps[i - 1]) && gaps[i] != 0.0) shrinking = false;
    e.pass = gaps.back() <= e.tol && shrinking;
    e.note = "equality case: relative gap at the smallest eps <= tol and shrinking";
  } else {
    e.pass = e.values.back() >= rhs.back() - e.tol;
    e.note = "inequality case: flux >= -int phi v mu_eps - tol at the smallest eps";
  }
  return e;
}

/// \int (gamma grad omega).(gamma grad phi) v dx over the half annuli; decays like eps.
inline LemmaCheckEntry check_volume_coupling(const LemmaContext& ctx, const std::vector<LemmaContext::Level>& levels,
                                             const VField& v, const TestFunctionSpec& tf) {
  LemmaCheckEntry e;
  e.name = "volume_coupling[v=" + v.name + "]";
  e.tol = 0.7;  // minimum log-log slope
  e.target = 0.0;
  for (const auto& lv : levels) {
    const Corrector& c = lv.omega;
    double total = 0.0;
    if (!tf.phi.is_constant() && v.kind != VField::Kind::Zero) {
      for (std::size_t k = 0; k < c.layout().size(); ++k) {
        const PatchFrame fr = c.frame(k);
        const auto hemi = fr.hemisphere(ctx.quad);
        const quad::Rule radial = quad::log_radial(c.layout().radius(k), c.epsilon(), ctx.quad.radial_order);
        const Point& ctr = c.layout().center(k);
        total += fr.volume(radial, hemi, [&](const Point& x) {
          const double s = c.layout().metric_distance(x, ctr);
          // (A grad omega) . grad phi with A grad omega = slope / s (x - c).
          return c.profile_slope(k, s) / s * (x - ctr).dot(tf.phi.gradient(x)) * v(c, x);
        });
      }
    }
    e.eps.push_back(lv.eps);
    e.values.push_back(total);
  }
  if (detail::all_zero(e.values, 1e-14)) {
    e.pass = true;
    e.limit = 0.0;
    e.note = "identically zero";
    return e;
  }
  if (std::any_of(e.values.begin(), e.values.end(), [](double x) { return x == 0.0; })) {
    e.pass = false;
    e.note = "mixed zero and nonzero values; no slope";
    return e;
  }
  const double slope = loglog_slope(e.eps, e.values);
  e.extra["slope"].push_back(slope);
  e.limit = detail::safe_limit(e.eps, e.values);
  e.pass = slope >= e.tol;
  e.note = "decay: log-log slope >= tol";
  return e;
}

/// Runs every check over the v family. The outer-flux checks require matched
/// series; a mismatch is reported as the error "outer_flux_identity".
inline LemmaCheckReport run_lemma_checks(const LemmaContext& ctx, const TestFunctionSpec& tf) {
  tf.validate(ctx.spec);
  LemmaCheckReport rep;
  const auto levels = ctx.levels();
  rep.entries.push_back(check_le2(ctx, levels, tf));
  for (const VField& v : tf.v) rep.entries.push_back(check_inner_flux(ctx, levels, v, tf));
  for (const VField& v : tf.v) rep.entries.push_back(check_boundary_flux_E2(ctx, levels, v, tf));
  if (ctx.coeff.is_identity())
    for (const VField& v : tf.v) rep.entries.push_back(check_boundary_flux_lifted(ctx, levels.back(), v, tf));
  const double mismatch = outer_flux_identity_mismatch(levels, ctx.quad);
  if (mismatch > 1e-10) {
    rep.errors.push_back({"outer_flux_identity",
                          "conormal fluxes of q_eps and omega_eps differ on d = eps (max relative mismatch " +
                              std::to_string(mismatch) +
                              "); the auxiliary series c_tilde must equal the kernel gradient series"});
  } else {
    for (const VField& v : tf.v) rep.entries.push_back(check_outer_flux_E3(ctx, levels, v, tf));
  }
  for (const VField& v : tf.v) rep.entries.push_back(check_volume_coupling(ctx, levels, v, tf));
  return rep;
}

// ---------------------------------------------------------------------------
// Convergence study

struct ConvergenceSetup {
  DomainSpec spec = DomainSpec::unit_box(3, BoundaryMode::PeriodicTop);
  std::vector<double> eps_list = {0.25, 0.125, 0.0625};
  double tilde_r = 1.0, c1 = 0.5, c2 = 2.0;
  CoefficientField coeff = CoefficientField::identity(3);
  std::vector<double> c_tilde = {1.0};
  ProblemData data;                 // mu is replaced by mu_override or the limit density
  std::optional<double> mu_override;
  SolverConfig solver;
  QuadratureOptions quad;
  double h_factor = 0.5;            // h = h_factor * r_eps unless h_list is given
  std::vector<double> h_list;
  double h_homogenized = 1.0 / 32.0;
  double h_fixed = 1.0 / 128.0;     // mesh of the energy-ordering check
  MeshOptions mesh;
  bool reduce_to_cell = true;       // one lattice period when data are laterally invariant
  int threads = 1;
};

struct ConvergenceRow {
  double eps = 0.0;
  double h = 0.0;
  std::size_t nodes = 0;
  double energy = 0.0;
  double l2_domain = 0.0;
  double l2_sigma = 0.0;
  double active_fraction = 0.0;
  SolveReport report;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  std::vector<double> fixed_mesh_energy;
  double mu = 0.0;
  double homogenized_energy = 0.0;
  double homogenized_penalty = 0.0;
  double penalty_recomputed = 0.0;
  double homogenized_sigma_mean = 0.0;
  SolveReport homogenized_report;
  std::map<std::string, double> slopes;
  std::map<std::string, bool> pass;
  bool reduced = false;
  std::string message;

  bool all_pass() const {
    if (!message.empty()) return false;
    for (const auto& [k, v] : pass)
      if (!v) return false;
    return true;
  }
};

namespace detail {
/// Field f does not depend on the lateral coordinates (sampled).
inline bool laterally_invariant(const Field& f, const DomainSpec& spec) {
  if (f.is_constant()) return true;
  const int n = spec.n;
  for (int a = 0; a < 7; ++a) {
    for (int b = 0; b < 5; ++b) {
      Point x(n), y(n);
      for (int i = 0; i + 1 < n; ++i) {
        x(i) = spec.extent(i) * (0.13 + 0.11 * a + 0.07 * i);
        y(i) = spec.extent(i) * (0.71 - 0.09 * b + 0.05 * i);
      }
      x(n - 1) = y(n - 1) = spec.extent(n - 1) * (0.05 + 0.18 * b);
      if (std::abs(f(x) - f(y)) > 1e-12 * std::max(1.0, std::abs(f(x)))) return false;
    }
  }
  return true;
}

template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mtx;
  for (int t = 0; t < std::min<int>(threads, static_cast<int>(count)); ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mtx);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}
}  // namespace detail

/// Solves u^eps for each eps and the homogenized u once, then compares them.
inline ConvergenceReport convergence_study(const ConvergenceSetup& s) {
  ConvergenceReport rep;
  const int n = s.spec.n;
  s.spec.validate();
  ProblemData data = s.data;
  if (s.mu_override) {
    rep.mu = *s.mu_override;
  } else {
    rep.mu = limit_density(s.spec, {s.tilde_r}, s.c1, s.c2, s.coeff, s.c_tilde, SignMode::PositiveNormalized,
                           s.eps_list, s.quad)
                 .limit;
  }
  data.mu = rep.mu;
  require(!s.eps_list.empty(), "convergence study needs at least one eps");
  rep.reduced = s.reduce_to_cell && s.spec.lateral_periodic() && detail::laterally_invariant(data.psi, s.spec) &&
                detail::laterally_invariant(data.phi, s.spec);
  auto cell_spec = [&](double eps) {
    DomainSpec c = s.spec;
    if (rep.reduced) {
      c.extents.assign(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i + 1 < n; ++i) c.extents[i] = 2.0 * eps;
      c.extents[n - 1] = s.spec.extent(n - 1);
    } else if (c.extents.empty()) {
      c.extents.assign(static_cast<std::size_t>(n), 1.0);
    }
    return c;
  };
  auto area_ratio = [&](const DomainSpec& c) { return s.spec.sigma_area() / c.sigma_area(); };

  // Homogenized solution.
  const DomainSpec hom_spec = cell_spec(s.eps_list.front());
  const Mesh hom_mesh = build_mesh(hom_spec, s.h_homogenized, s.mesh);
  const SparseOperator Kh = assemble_stiffness(hom_mesh, s.coeff);
  HomogenizedSolution hom = solve_homogenized(Kh, data, hom_mesh, s.solver);
  rep.homogenized_report = hom.report;
  const double hom_ratio = area_ratio(hom_spec);
  rep.homogenized_energy = hom.report.energy * hom_ratio;
  rep.homogenized_penalty = penalty_energy(hom.u.grid, data, hom.u.values) * hom_ratio;
  {
    // Independent recomputation: c_n mu \int_Sigma (u - phi)_-^2 via a Gauss rule of a different order.
    const Grid& g = hom.u.grid;
    const quad::Rule r = quad::mapped(quad::gauss_legendre(5), 0.0, 1.0);
    double acc = 0.0;
    double area = 1.0;
    for (int i = 0; i + 1 < n; ++i) area *= g.h[i];
    std::vector<int> cell(static_cast<std::size_t>(n - 1), 0);
    std::size_t faces = 1;
    for (int i = 0; i + 1 < n; ++i) faces *= static_cast<std::size_t>(g.cells[i]);
    std::size_t pts = 1;
    for (int i = 0; i + 1 < n; ++i) pts *= r.nodes.size();
    for (std::size_t f = 0; f < faces; ++f) {
      for (std::size_t q = 0; q < pts; ++q) {
        std::size_t rest = q;
        double w = area;
        Point x = Point::Zero(n);
        for (int i = 0; i + 1 < n; ++i) {
          const std::size_t j = rest % r.nodes.size();
          rest /= r.nodes.size();
          x(i) = (cell[i] + r.nodes[j]) * g.h[i];
          w *= r.weights[j];
        }
        const double neg = std::max(data.phi(x) - hom.u.interpolate(x), 0.0);
        acc += w * neg * neg;
      }
      for (int i = 0; i + 1 < n; ++i) {
        if (++cell[i] < g.cells[i]) break;
        cell[i] = 0;
      }
    }
    rep.penalty_recomputed = data.c_n * data.mu * acc * hom_ratio;
  }
  {
    double mean = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < hom_mesh.num_nodes(); ++i)
      if (hom_mesh.tag(i) == NodeTag::SigmaFree) mean += hom.u[i], ++cnt;
    rep.homogenized_sigma_mean = cnt ? mean / static_cast<double>(cnt) : 0.0;
  }
  if (!hom.report.converged) {
    rep.message = "homogenized solve did not converge: " + hom.report.message;
    return rep;
  }

  // eps-level solves.
  rep.rows.resize(s.eps_list.size());
  std::vector<std::string> failures(s.eps_list.size());
  detail::parallel_for(s.eps_list.size(), s.threads, [&](std::size_t i) {
    const double eps = s.eps_list[i];
    const DomainSpec cs = cell_spec(eps);
    const PatchLayout layout = build_layout(cs, eps, {s.tilde_r}, s.c1, s.c2, s.coeff);
    const double h = s.h_list.empty() ? s.h_factor * layout.min_radius() : s.h_list.at(i);
    const Mesh mesh = build_mesh(cs, layout, h, s.mesh);
    const SparseOperator K = assemble_stiffness(mesh, s.coeff);
    ObstacleSolution sol = solve_obstacle(K, data, mesh, layout, s.solver);
    ConvergenceRow& row = rep.rows[i];
    const double ratio = area_ratio(cs);
    row.eps = eps;
    row.h = h;
    row.nodes = mesh.num_nodes();
    row.report = sol.report;
    row.energy = sol.report.energy * ratio;
    std::size_t constrained = 0;
    for (std::size_t k = 0; k < mesh.num_nodes(); ++k) constrained += mesh.tag(k) == NodeTag::SigmaPatch;
    row.active_fraction = constrained ? static_cast<double>(sol.report.active_set) / constrained : 0.0;
    auto ref = [&](const Point& x) { return hom.u.interpolate(x); };
    row.l2_domain = std::sqrt(l2_distance_squared(sol.u, ref) * ratio);
    row.l2_sigma = std::sqrt(sigma_l2_distance_squared(sol.u, ref) * ratio);
    if (!sol.report.converged) failures[i] = "obstacle solve at eps = " + std::to_string(eps) + " did not converge: " + sol.report.message;
  });
  for (const auto& f : failures)
    if (!f.empty()) {
      rep.message = f;
      return rep;
    }

  // Energy ordering on one fixed mesh shared by every lattice.
  const double eps_max = *std::max_element(s.eps_list.begin(), s.eps_list.end());
  const DomainSpec fixed_spec = cell_spec(eps_max);
  MeshOptions fixed_opt = s.mesh;
  fixed_opt.resolution_override = true;
  rep.fixed_mesh_energy.resize(s.eps_list.size());
  detail::parallel_for(s.eps_list.size(), s.threads, [&](std::size_t i) {
    const PatchLayout layout = build_layout(fixed_spec, s.eps_list[i], {s.tilde_r}, s.c1, s.c2, s.coeff);
    const Mesh mesh = build_mesh(fixed_spec, layout, s.h_fixed, fixed_opt);
    const SparseOperator K = assemble_stiffness(mesh, s.coeff);
    ObstacleSolution sol = solve_obstacle(K, data, mesh, layout, s.solver);
    rep.fixed_mesh_energy[i] = sol.report.energy * area_ratio(fixed_spec);
    if (!sol.report.converged) failures[i] = "fixed-mesh obstacle solve did not converge: " + sol.report.message;
  });
  for (const auto& f : failures)
    if (!f.empty()) {
      rep.message = f;
      return rep;
    }

  std::vector<double> eps, dd, ds;
  for (const auto& r : rep.rows) eps.push_back(r.eps), dd.push_back(r.l2_domain), ds.push_back(r.l2_sigma);
  const bool zero_dist = detail::all_zero(dd, 1e-12);
  bool decreasing = true;
  for (std::size_t i = 1; i < dd.size(); ++i) decreasing = decreasing && dd[i] < dd[i - 1];
  rep.pass["l2_domain_strictly_decreasing"] = zero_dist || decreasing;
  bool ordered = true;
  for (std::size_t i = 1; i < rep.fixed_mesh_energy.size(); ++i)
    ordered = ordered && rep.fixed_mesh_energy[i] >= rep.fixed_mesh_energy[i - 1] - 1e-12 * std::max(1.0, std::abs(rep.fixed_mesh_energy[i - 1]));
  rep.pass["energy_nondecreasing_fixed_mesh"] = ordered;
  rep.pass["penalty_self_consistent"] =
      std::abs(rep.homogenized_penalty - rep.penalty_recomputed) <= 1e-10 * std::max(1.0, std::abs(rep.penalty_recomputed));
  if (eps.size() >= 2 && !zero_dist && !detail::all_zero(dd) &&
      std::none_of(dd.begin(), dd.end(), [](double x) { return x == 0.0; })) {
    rep.slopes["l2_domain"] = loglog_slope(eps, dd);
    if (std::none_of(ds.begin(), ds.end(), [](double x) { return x == 0.0; })) rep.slopes["l2_sigma"] = loglog_slope(eps, ds);
  }
  return rep;
}

}  // namespace bhom
