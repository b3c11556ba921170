// Acceptance run: one PASS/FAIL line per criterion. Exit status is 0 unless the
// binary itself breaks; failed criteria are reported, not hidden.
#include "bhom/bhom.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

using namespace bhom;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const DomainSpec kBox = DomainSpec::unit_box(3);
const std::vector<double> kEps{0.25, 0.125, 0.0625};
const std::vector<double> kFine{0.125, 0.0625, 0.03125};

std::string fmt(double v) { return io::format_number(v); }

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

Corrector corrector(double eps, double tr = 1.0) {
  return Corrector(build_layout(kBox, eps, tr), GreenKernel(CoefficientField::identity(3)));
}

double count(double eps) { return 1.0 / (4.0 * eps * eps); }

Outcome corrector_energy() {
  double worst = 0.0;
  std::vector<double> totals;
  for (double e : kFine) {
    const double t = omega_h1_seminorm(corrector(e)).total;
    worst = std::max(worst, std::abs(t - count(e) * oracle::omega_energy_half_ball(e * e, e)));
    totals.push_back(t);
  }
  for (double e : kEps) {
    const double t = omega_h1_seminorm(corrector(e)).total;
    worst = std::max(worst, std::abs(t - count(e) * oracle::omega_energy_half_ball(e * e, e)));
  }
  const double limit = richardson(kFine, totals).limit;
  const double gap = std::abs(limit - oracle::pi / 2.0) / (oracle::pi / 2.0);
  return {worst <= 1e-8 && gap <= 0.05,
          "max |total - oracle| = " + fmt(worst) + ", extrapolated " + fmt(limit) + " (rel gap " + fmt(gap) + ")"};
}

Outcome corrector_l2() {
  std::vector<double> totals;
  double worst = 0.0;
  for (double e : kEps) {
    const auto n = omega_l2(corrector(e));
    const double r = e * e, N = 1.0 / r - 1.0 / e;
    const double annulus = oracle::simpson(
        [&](double d) {
          const double w = (1.0 / d - 1.0 / e) / N;
          return w * w * d * d;
        },
        r, e, 20000);
    const double expected = 2.0 * oracle::pi * (annulus + r * r * r / 3.0);
    for (double p : n.per_patch) worst = std::max(worst, std::abs(p - expected));
    totals.push_back(n.total);
  }
  const double s = loglog_slope(kEps, totals);
  return {worst <= 1e-8 && std::abs(s - 3.0) <= 0.4,
          "slope " + fmt(s) + ", max per-patch error " + fmt(worst)};
}

Outcome q_decay() {
  std::vector<double> totals;
  double worst = 0.0;
  for (double e : kEps) {
    const auto n = q_gradient_l2(AuxiliaryFunction(build_layout(kBox, e, 1.0), {-1.0}));
    const double expected = oracle::q_energy_half_ball(oracle::kappa3(-1.0, 1.0, e), e);
    for (double p : n.per_patch) worst = std::max(worst, std::abs(p - expected));
    totals.push_back(n.total);
  }
  const double s = loglog_slope(kEps, totals);
  const bool ok = worst <= 1e-10 && std::abs(s - 1.0) <= 0.3;
  std::string d = "slope " + fmt(s) + " over " + list(kEps) + ", max per-patch error " + fmt(worst);
  if (!ok) d += "; lattice total is pi*eps/(10(1-eps)^2), whose (1-eps)^-2 factor steepens the coarse-eps slope";
  return {ok, d};
}

double pairing_limit(double tr) {
  std::vector<double> v;
  for (double e : kFine) {
    const MuDensity m(build_layout(kBox, e, tr), {-1.0}, SignMode::Verbatim);
    v.push_back(std::abs(mu_weak_pairing(m, Field::constant(1.0))));
  }
  return richardson(kFine, v).limit;
}

Outcome mu_limit() {
  const double one = pairing_limit(1.0), two = pairing_limit(2.0);
  const double g1 = std::abs(one - oracle::pi / 2.0) / (oracle::pi / 2.0);
  const double g2 = std::abs(two - oracle::pi) / oracle::pi;
  return {g1 <= 0.05 && g2 <= 0.05, "r~=1 -> " + fmt(one) + " (rel gap " + fmt(g1) + "), r~=2 -> " + fmt(two) +
                                        " (rel gap " + fmt(g2) + ")"};
}

LemmaContext matched_context() {
  LemmaContext ctx;
  ctx.c_tilde = {-1.0};
  return ctx;
}

TestFunctionSpec family() {
  TestFunctionSpec tf;
  tf.v.push_back(VField::custom("1 + 0.5*x1^2", Field::from([](const Point& x) { return 1.0 + 0.5 * x(0) * x(0); })));
  tf.v.push_back(VField::custom("exp(-x3)", Field::from([](const Point& x) { return std::exp(-x(2)); })));
  return tf;
}

Outcome flat_flux() {
  const LemmaContext ctx = matched_context();
  const auto levels = ctx.levels();
  const TestFunctionSpec tf = family();
  double worst = 0.0;
  for (const VField& v : tf.v)
    for (double x : check_boundary_flux_E2(ctx, levels, v, tf).values) worst = std::max(worst, std::abs(x));
  return {worst <= 1e-12, "max |E2| = " + fmt(worst) + " over " + std::to_string(tf.v.size()) + " test fields"};
}

Outcome equality_case() {
  const LemmaContext ctx = matched_context();
  const auto e = check_outer_flux_E3(ctx, ctx.levels(), VField::one_minus_omega(), TestFunctionSpec{});
  const auto& gaps = e.extra.at("relative_gap");
  bool shrinking = true;
  for (std::size_t i = 1; i < gaps.size(); ++i) shrinking = shrinking && gaps[i] < gaps[i - 1];
  return {gaps.back() <= 0.05 && shrinking, "relative gaps " + list(gaps)};
}

Outcome slab_trace() {
  const Mesh m = build_mesh(DomainSpec::unit_box(3, BoundaryMode::PeriodicTop), 1.0 / 32.0);
  const SparseOperator K = assemble_stiffness(m, CoefficientField::identity(3));
  ProblemData d;
  d.psi = Field::constant(0.0);
  d.phi = Field::constant(1.0);
  d.mu = 0.5;
  d.c_n = 1.0;
  const HomogenizedSolution s = solve_homogenized(K, d, m, SolverConfig{});
  double sum = 0.0, worst = 0.0;
  std::size_t n = 0;
  const double target = oracle::slab_trace(0.5, 1.0);
  for (std::size_t i = 0; i < m.num_nodes(); ++i) {
    if (m.coord(i)(2) != 0.0) continue;
    sum += s.u[i], ++n;
    worst = std::max(worst, std::abs(s.u[i] - target));
  }
  return {s.report.converged && worst <= 1e-3,
          "trace mean " + fmt(sum / n) + ", 1-D Robin value " + fmt(target) + ", max deviation " + fmt(worst) +
              " on " + std::to_string(m.num_nodes()) + " nodes (a trace of -1 is not a solution of this problem)"};
}

Outcome obstacle() {
  const PatchLayout l = build_layout(kBox, 0.5, 1.0);
  const Mesh m = build_mesh(kBox, l, 1.0 / 16.0);
  const SparseOperator K = assemble_stiffness(m, CoefficientField::identity(3));
  ProblemData d;
  d.psi = Field::constant(0.0);
  d.phi = Field::constant(1.0);
  const ObstacleSolution s = solve_obstacle(K, d, m, l, SolverConfig{});
  const std::size_t n = m.num_nodes();
  std::vector<std::uint8_t> fixed(n, 0);
  std::vector<double> lower(n, -std::numeric_limits<double>::infinity()), x0(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (m.tag(i) == NodeTag::Gamma) fixed[i] = 1;
    if (m.tag(i) == NodeTag::SigmaPatch) lower[i] = 1.0;
  }
  const oracle::Csr csr{n, &K.row_ptr(), &K.cols(), &K.values()};
  int iters = 0;
  const auto ref = oracle::projected_gradient(csr, x0, fixed, lower, 1e-14, 200000, &iters);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(ref[i] - s.u[i]));
  return {s.report.converged && worst <= 1e-6 && s.complementarity <= 1e-8,
          std::to_string(n) + " nodes, max nodal gap " + fmt(worst) + ", complementarity " + fmt(s.complementarity) +
              ", oracle iterations " + std::to_string(iters)};
}

Outcome theorem_trend() {
  ConvergenceSetup s;
  s.data.psi = Field::constant(0.0);
  s.data.phi = Field::constant(1.0);
  s.data.c_n = 1.0;
  s.mu_override = limit_density(kBox, {1.0}, 0.5, 2.0, CoefficientField::identity(3), {1.0},
                                SignMode::PositiveNormalized, kFine)
                      .limit;
  const ConvergenceReport rep = convergence_study(s);
  if (!rep.message.empty()) return {false, "study failed: " + rep.message};
  std::vector<double> l2;
  for (const auto& r : rep.rows) l2.push_back(r.l2_domain);
  const bool ok = rep.pass.at("l2_domain_strictly_decreasing") && rep.pass.at("energy_nondecreasing_fixed_mesh");
  std::string d = "mu " + fmt(rep.mu) + ", L2 distances " + list(l2) + ", fixed-mesh energies " +
                  list(rep.fixed_mesh_energy);
  if (!ok)
    d += "; the staggered lattices are not nested and u^eps approaches the full-contact limit rather than the "
         "Robin solution";
  return {ok, d};
}

Outcome invariants() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0), unit(0.0, 1.0);
  const Corrector c = corrector(0.125);
  const PatchLayout& l = c.layout();
  const double r = l.radius(0), eps = c.epsilon();

  // Patch interior and the half ball it sits on.
  double pr1 = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = static_cast<std::size_t>(unit(rng) * l.size()) % l.size();
    Point x = l.center(k);
    const double s = r * std::sqrt(unit(rng));
    const double a = 2.0 * oracle::pi * unit(rng);
    x(0) += s * std::cos(a), x(1) += s * std::sin(a);
    pr1 = std::max(pr1, std::abs(c.eval_omega(x) - 1.0));
  }

  double pr3 = 0.0;
  for (int t = 0; t < 20000; ++t) {
    Point x(3);
    x << unit(rng), unit(rng), 0.2 * unit(rng);
    pr3 = std::max(pr3, std::abs(c.eval_omega(x)));
  }

  // Finite-difference Laplace-Beltrami residual of the kernel on the annulus.
  const GreenKernel k(CoefficientField::identity(3));
  double worst_ratio = 0.0;
  for (int t = 0; t < 100; ++t) {
    Vector dir(3);
    dir << u(rng), u(rng), std::abs(u(rng));
    dir.normalize();
    const double s = r + (0.2 + 0.7 * unit(rng)) * (eps - r);
    const Point x = l.center(0) + s * dir;
    const double step = 0.02 * s;
    const double a = std::abs(k.laplace_beltrami_residual(x, l.center(0), step));
    const double b = std::abs(k.laplace_beltrami_residual(x, l.center(0), step / 2.0));
    worst_ratio = std::max(worst_ratio, std::abs(a / b - 4.0));
  }

  Matrix g(3, 3);
  g << 1.3, 0.2, 0.0, 0.2, 0.9, 0.1, 0.0, 0.1, 1.1;
  const GreenKernel ka(CoefficientField::matrix(g), {1.0, 0.3, -0.2});
  double green = 0.0;
  for (int t = 0; t < 100; ++t) {
    Point y(3), dir(3);
    y << u(rng), u(rng), u(rng);
    dir << u(rng), u(rng), u(rng);
    const Point x = y + (0.3 + 0.2 * unit(rng)) * dir.normalized();
    const Vector an = ka.green_gradient(x, y);
    for (int i = 0; i < 3; ++i) {
      Point p = x, q = x;
      p(i) += 1e-5, q(i) -= 1e-5;
      const double fd = (ka.green_value(p, y) - ka.green_value(q, y)) / 2e-5;
      green = std::max(green, std::abs(fd - an(i)) / std::max(1.0, std::abs(an(i))));
    }
  }

  const Mesh m = build_mesh(DomainSpec::unit_box(3, BoundaryMode::PeriodicTop), 0.25);
  ProblemData d;
  d.psi = Field::constant(0.0);
  d.phi = Field::from([](const Point& x) { return 0.5 + 0.3 * std::sin(2 * oracle::pi * x(0)); });
  d.mu = 0.7;
  d.c_n = 1.3;
  DiscreteField v(m);
  for (double& x : v.values) x = -0.2 + 1.4 * unit(rng);
  const PenaltyDerivatives p = assemble_boundary_penalty(m, d, v);
  double penalty = 0.0;
  for (std::size_t i = 0; i < m.num_nodes(); ++i) {
    if (m.coord(i)(2) != 0.0) continue;
    std::vector<double> a = v.values, b = v.values;
    a[i] += 1e-6, b[i] -= 1e-6;
    const double fd = (penalty_energy(v.grid, d, a) - penalty_energy(v.grid, d, b)) / 2e-6;
    penalty = std::max(penalty, std::abs(fd - p.gradient[i]) / std::max(1.0, std::abs(p.gradient[i])));
  }

  const bool ok = pr1 == 0.0 && pr3 <= 1.0 + 1e-12 && worst_ratio <= 0.3 && green <= 1e-6 && penalty <= 1e-6;
  return {ok, "pr1 max deviation " + fmt(pr1) + ", sup omega " + fmt(pr3) + ", step-halving ratio within " +
                  fmt(worst_ratio) + " of 4, green_gradient rel " + fmt(green) + ", penalty rel " + fmt(penalty)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"corrector energy limit", corrector_energy},
      {"corrector L2 decay", corrector_l2},
      {"auxiliary function decay", q_decay},
      {"surface density limit", mu_limit},
      {"flat boundary flux", flat_flux},
      {"outer flux equality case", equality_case},
      {"homogenized slab trace", slab_trace},
      {"obstacle solver", obstacle},
      {"convergence trend", theorem_trend},
      {"invariants", invariants},
  };
  int passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    passed += o.pass;
    std::printf("criterion %zu %s: %s | %s (%.1f s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), sec);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria pass\n", passed, criteria.size());
  return 0;
}
