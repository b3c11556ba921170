#pragma once

#include "bhom/corrector.hpp"
#include "bhom/geometry.hpp"
#include "bhom/kernel.hpp"
#include "bhom/quadrature.hpp"
#include "bhom/sparse.hpp"
#include "bhom/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace bhom {

/// Geometry of a structured grid, detached from the tag arrays of Mesh.
struct Grid {
  int n = 0;
  std::vector<int> cells, nodes;
  std::vector<double> h, extent;
  std::vector<bool> periodic;

  static Grid of(const Mesh& m) {
    Grid g;
    g.n = m.dim();
    for (int i = 0; i < g.n; ++i) {
      g.cells.push_back(m.cells(i));
      g.nodes.push_back(m.nodes_along(i));
      g.h.push_back(m.spacing(i));
      g.extent.push_back(m.domain().extent(i));
      g.periodic.push_back(m.periodic(i));
    }
    return g;
  }

  std::size_t num_nodes() const {
    std::size_t k = 1;
    for (int c : nodes) k *= static_cast<std::size_t>(c);
    return k;
  }

  std::size_t index(const std::vector<int>& grid) const {
    std::size_t k = 0, stride = 1;
    for (int i = 0; i < n; ++i) {
      int g = grid[i];
      if (periodic[i]) g = ((g % nodes[i]) + nodes[i]) % nodes[i];
      k += static_cast<std::size_t>(g) * stride;
      stride *= static_cast<std::size_t>(nodes[i]);
    }
    return k;
  }

  /// Multilinear interpolation of nodal values at x (clamped to the box,
  /// wrapped along periodic axes).
  double interpolate(const std::vector<double>& values, const Point& x) const {
    std::vector<int> base(static_cast<std::size_t>(n));
    std::vector<double> xi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      double t = x(i);
      if (periodic[i]) {
        t = std::fmod(t, extent[i]);
        if (t < 0.0) t += extent[i];
      }
      t /= h[i];
      int c = static_cast<int>(std::floor(t));
      c = std::clamp(c, 0, cells[i] - 1);
      base[i] = c;
      xi[i] = std::clamp(t - c, 0.0, 1.0);
    }
    double acc = 0.0;
    std::vector<int> g(static_cast<std::size_t>(n));
    for (std::size_t a = 0; a < (std::size_t{1} << n); ++a) {
      double w = 1.0;
      for (int i = 0; i < n; ++i) {
        const bool hi = (a >> i) & 1u;
        w *= hi ? xi[i] : 1.0 - xi[i];
        g[i] = base[i] + (hi ? 1 : 0);
      }
      if (w != 0.0) acc += w * values[index(g)];
    }
    return acc;
  }
};

/// Nodal field on a structured grid.
struct DiscreteField {
  Grid grid;
  std::vector<double> values;

  DiscreteField() = default;
  DiscreteField(const Mesh& m, double fill = 0.0) : grid(Grid::of(m)), values(m.num_nodes(), fill) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  double interpolate(const Point& x) const { return grid.interpolate(values, x); }
};

/// Dirichlet datum psi on Gamma, obstacle phi, multiplier c_n and surface
/// density mu of the limit functional.
struct ProblemData {
  Field psi = Field::constant(0.0);
  Field phi = Field::constant(0.0);
  double c_n = 1.0;
  double mu = 0.0;
};

namespace detail {

inline std::vector<double> node_values(const Mesh& m, const Field& f, const char* what) {
  std::vector<double> v(m.num_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = f.is_constant() ? *f.constant_value : f(m.coord(i));
    if (!std::isfinite(v[i])) throw DomainError(std::string(what) + " is not finite at a mesh node");
  }
  return v;
}

/// Element stiffness of \int (A grad N_a) . grad N_b on an axis-aligned cell
/// with spacings h, by 2-point Gauss per axis (exact for multilinear shapes).
inline std::vector<double> element_stiffness(const std::vector<double>& h, const Matrix& A) {
  const int n = static_cast<int>(h.size());
  const std::size_t nc = std::size_t{1} << n;
  const double g = 0.5 / std::sqrt(3.0);
  const double gp[2] = {0.5 - g, 0.5 + g};
  double vol = 1.0;
  for (double hi : h) vol *= hi;
  std::vector<double> Ke(nc * nc, 0.0);
  std::vector<double> grads(nc * static_cast<std::size_t>(n));
  for (std::size_t q = 0; q < nc; ++q) {
    std::vector<double> xi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) xi[i] = gp[(q >> i) & 1u];
    const double w = vol / static_cast<double>(nc);
    for (std::size_t a = 0; a < nc; ++a) {
      for (int i = 0; i < n; ++i) {
        double d = (((a >> i) & 1u) ? 1.0 : -1.0) / h[i];
        for (int j = 0; j < n; ++j)
          if (j != i) d *= ((a >> j) & 1u) ? xi[j] : 1.0 - xi[j];
        grads[a * n + i] = d;
      }
    }
    for (std::size_t a = 0; a < nc; ++a)
      for (std::size_t b = 0; b < nc; ++b) {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) s += A(i, j) * grads[a * n + i] * grads[b * n + j];
        Ke[a * nc + b] += w * s;
      }
  }
  return Ke;
}

/// Tensor Gauss rule on the (n-1)-dimensional reference face [0,1]^{n-1}.
struct FaceRule {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;
};

inline FaceRule face_rule(int dims, int order) {
  const quad::Rule r = quad::mapped(quad::gauss_legendre(order), 0.0, 1.0);
  FaceRule out;
  std::size_t total = 1;
  for (int i = 0; i < dims; ++i) total *= r.nodes.size();
  for (std::size_t q = 0; q < total; ++q) {
    std::size_t rest = q;
    std::vector<double> p(static_cast<std::size_t>(dims));
    double w = 1.0;
    for (int i = 0; i < dims; ++i) {
      const std::size_t k = rest % r.nodes.size();
      rest /= r.nodes.size();
      p[i] = r.nodes[k];
      w *= r.weights[k];
    }
    out.points.push_back(std::move(p));
    out.weights.push_back(w);
  }
  return out;
}

/// Calls fn(corner_nodes, face_origin) for every cell face on Sigma.
template <class Fn>
void for_each_sigma_face(const Grid& g, Fn&& fn) {
  const int m = g.n - 1;
  std::vector<int> cell(static_cast<std::size_t>(m), 0), node(static_cast<std::size_t>(g.n), 0);
  std::vector<std::size_t> corners(std::size_t{1} << m);
  std::size_t faces = 1;
  for (int i = 0; i < m; ++i) faces *= static_cast<std::size_t>(g.cells[i]);
  for (std::size_t f = 0; f < faces; ++f) {
    for (std::size_t a = 0; a < corners.size(); ++a) {
      for (int i = 0; i < m; ++i) node[i] = cell[i] + static_cast<int>((a >> i) & 1u);
      node[m] = 0;
      corners[a] = g.index(node);
    }
    fn(static_cast<const std::vector<std::size_t>&>(corners), static_cast<const std::vector<int>&>(cell));
    for (int i = 0; i < m; ++i) {
      if (++cell[i] < g.cells[i]) break;
      cell[i] = 0;
    }
  }
}

inline double face_shape(std::size_t a, const std::vector<double>& xi) {
  double w = 1.0;
  for (std::size_t i = 0; i < xi.size(); ++i) w *= ((a >> i) & 1u) ? xi[i] : 1.0 - xi[i];
  return w;
}

}  // namespace detail

/// CSR pattern of the multilinear stiffness on the mesh: node i couples with
/// every node sharing a cell.
inline SparseOperator stiffness_pattern(const Mesh& m) {
  const int n = m.dim();
  const std::size_t N = m.num_nodes();
  std::vector<std::size_t> row_ptr(N + 1, 0);
  std::vector<std::uint32_t> cols;
  require(N < std::numeric_limits<std::uint32_t>::max(), "mesh too large for 32-bit column indices");
  std::size_t offsets = 1;
  for (int i = 0; i < n; ++i) offsets *= 3;
  cols.reserve(N * offsets);
  std::vector<int> multi, g(static_cast<std::size_t>(n));
  std::vector<std::uint32_t> row;
  for (std::size_t k = 0; k < N; ++k) {
    m.node_multi(k, multi);
    row.clear();
    for (std::size_t o = 0; o < offsets; ++o) {
      std::size_t rest = o;
      bool ok = true;
      for (int i = 0; i < n; ++i) {
        const int d = static_cast<int>(rest % 3) - 1;
        rest /= 3;
        int v = multi[i] + d;
        if (m.periodic(i)) {
          v = (v + m.nodes_along(i)) % m.nodes_along(i);
        } else if (v < 0 || v >= m.nodes_along(i)) {
          ok = false;
          break;
        }
        g[i] = v;
      }
      if (ok) row.push_back(static_cast<std::uint32_t>(m.node_index(g)));
    }
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    cols.insert(cols.end(), row.begin(), row.end());
    row_ptr[k + 1] = cols.size();
  }
  return SparseOperator(N, std::move(row_ptr), std::move(cols));
}

/// Galerkin matrix of \int (A grad u) . grad v with multilinear elements.
inline SparseOperator assemble_stiffness(const Mesh& m, const CoefficientField& coeff) {
  require(coeff.dim() == m.dim(), "coefficient dimension does not match the mesh");
  SparseOperator K = stiffness_pattern(m);
  std::vector<double> h;
  for (int i = 0; i < m.dim(); ++i) h.push_back(m.spacing(i));
  const std::vector<double> Ke = detail::element_stiffness(h, coeff.A());
  const std::size_t nc = std::size_t{1} << m.dim();
  m.for_each_cell([&](const std::vector<int>&, const std::vector<std::size_t>& corners) {
    for (std::size_t a = 0; a < nc; ++a)
      for (std::size_t b = 0; b < nc; ++b) K.add(corners[a], corners[b], Ke[a * nc + b]);
  });
  return K;
}

/// Boundary quadrature order on Sigma faces.
inline constexpr int kSigmaQuadOrder = 3;

/// c_n mu \int_Sigma (u - phi)_-^2 dS.
inline double penalty_energy(const Grid& g, const ProblemData& data, const std::vector<double>& u) {
  if (data.mu == 0.0 || data.c_n == 0.0) return 0.0;
  const detail::FaceRule rule = detail::face_rule(g.n - 1, kSigmaQuadOrder);
  double area = 1.0;
  for (int i = 0; i + 1 < g.n; ++i) area *= g.h[i];
  double acc = 0.0;
  Point x = Point::Zero(g.n);
  detail::for_each_sigma_face(g, [&](const std::vector<std::size_t>& corners, const std::vector<int>& cell) {
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      double uq = 0.0;
      for (std::size_t a = 0; a < corners.size(); ++a) uq += detail::face_shape(a, rule.points[q]) * u[corners[a]];
      for (int i = 0; i + 1 < g.n; ++i) x(i) = (cell[i] + rule.points[q][i]) * g.h[i];
      const double neg = std::max(data.phi(x) - uq, 0.0);
      acc += rule.weights[q] * area * neg * neg;
    }
  });
  return data.c_n * data.mu * acc;
}

struct PenaltyDerivatives {
  std::vector<double> gradient;  // d/du_i of the penalty energy
  SparseOperator hessian;        // 2 c_n mu times the mass matrix of the violated region
  double energy = 0.0;
};

/// Gradient -2 c_n mu \int (u - phi)_- N_i and generalized Hessian
/// 2 c_n mu \int chi_{u < phi} N_i N_j of the boundary penalty. `pattern`
/// supplies the sparsity (the stiffness pattern contains every Sigma coupling).
inline PenaltyDerivatives assemble_boundary_penalty(const Grid& g, const ProblemData& data,
                                                    const std::vector<double>& u, const SparseOperator& pattern) {
  require(data.mu >= 0.0, "the surface density mu must be nonnegative");
  require(u.size() == g.num_nodes() && pattern.rows() == u.size(), "penalty: size mismatch");
  PenaltyDerivatives out{std::vector<double>(u.size(), 0.0), pattern.zero_like(), 0.0};
  const double s = data.c_n * data.mu;
  if (s == 0.0) return out;
  const detail::FaceRule rule = detail::face_rule(g.n - 1, kSigmaQuadOrder);
  double area = 1.0;
  for (int i = 0; i + 1 < g.n; ++i) area *= g.h[i];
  Point x = Point::Zero(g.n);
  std::vector<double> shape;
  detail::for_each_sigma_face(g, [&](const std::vector<std::size_t>& corners, const std::vector<int>& cell) {
    shape.resize(corners.size());
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      double uq = 0.0;
      for (std::size_t a = 0; a < corners.size(); ++a) {
        shape[a] = detail::face_shape(a, rule.points[q]);
        uq += shape[a] * u[corners[a]];
      }
      for (int i = 0; i + 1 < g.n; ++i) x(i) = (cell[i] + rule.points[q][i]) * g.h[i];
      const double neg = std::max(data.phi(x) - uq, 0.0);
      if (neg <= 0.0) continue;
      const double w = rule.weights[q] * area;
      out.energy += s * w * neg * neg;
      for (std::size_t a = 0; a < corners.size(); ++a) {
        out.gradient[corners[a]] -= 2.0 * s * w * neg * shape[a];
        for (std::size_t b = 0; b < corners.size(); ++b)
          out.hessian.add(corners[a], corners[b], 2.0 * s * w * shape[a] * shape[b]);
      }
    }
  });
  return out;
}

inline PenaltyDerivatives assemble_boundary_penalty(const Mesh& m, const ProblemData& data, const DiscreteField& u) {
  return assemble_boundary_penalty(Grid::of(m), data, u.values, stiffness_pattern(m));
}

enum class EnergyMode { Eps, Homogenized };

/// u^T K u, plus the boundary penalty in homogenized mode.
inline double energy(const SparseOperator& K, const DiscreteField& u, const ProblemData& data, EnergyMode mode) {
  double e = K.quadratic_form(u.values);
  if (mode == EnergyMode::Homogenized) e += penalty_energy(u.grid, data, u.values);
  return e;
}

/// Obstacle solve result with the multiplier on constrained nodes.
struct ObstacleSolution {
  DiscreteField u;
  std::vector<double> multiplier;  // (K u)_i on Sigma-patch nodes, 0 elsewhere
  SolveReport report;
  double complementarity = 0.0;    // max |min(u - phi, lambda)| over Sigma-patch nodes
};

/// Minimizes u^T K u subject to u = psi on Gamma and u >= phi on Sigma-patch
/// nodes by the primal-dual active set method.
inline ObstacleSolution solve_obstacle(const SparseOperator& K, const ProblemData& data, const Mesh& mesh,
                                       const PatchLayout& layout, const SolverConfig& config) {
  Stopwatch sw;
  const std::size_t N = mesh.num_nodes();
  require(K.rows() == N, "stiffness size does not match the mesh");
  require(layout.empty() || layout.dim() == mesh.dim(), "layout dimension does not match the mesh");
  const std::vector<double> psi = detail::node_values(mesh, data.psi, "psi");
  const std::vector<double> phi = detail::node_values(mesh, data.phi, "phi");
  std::vector<std::size_t> constrained;
  std::vector<std::uint8_t> fixed(N, 0);
  DiscreteField u(mesh, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    if (mesh.tag(i) == NodeTag::Gamma) {
      if (mesh.patch_of(i) >= 0) throw DomainError("node tagged both Gamma and Sigma-patch");
      fixed[i] = 1;
      u[i] = psi[i];
    } else if (mesh.tag(i) == NodeTag::SigmaPatch) {
      constrained.push_back(i);
    }
  }
  double c = config.pdas_c;
  if (!(c > 0.0)) {
    const auto d = K.diagonal();
    double s = 0.0;
    for (double v : d) s += v;
    c = 1e3 * s / static_cast<double>(N);
  }
  ObstacleSolution out;
  out.multiplier.assign(N, 0.0);
  std::vector<std::uint8_t> active(constrained.size(), 0);
  const std::vector<double> zero(N, 0.0);
  SolveReport& rep = out.report;
  std::vector<double> Ku(N);
  for (int it = 1; it <= config.max_outer_iterations; ++it) {
    // New active set from the current primal-dual pair; ties count as inactive.
    std::vector<std::uint8_t> next(constrained.size(), 0);
    for (std::size_t j = 0; j < constrained.size(); ++j) {
      const std::size_t i = constrained[j];
      next[j] = out.multiplier[i] + c * (phi[i] - u[i]) > 0.0 ? 1 : 0;
    }
    const bool same = it > 1 && next == active;
    active = next;
    if (same) {
      rep.converged = true;
      break;
    }
    std::vector<std::uint8_t> mask = fixed;
    for (std::size_t j = 0; j < constrained.size(); ++j)
      if (active[j]) {
        mask[constrained[j]] = 1;
        u[constrained[j]] = phi[constrained[j]];
      }
    const SolveReport inner = cg_solve(K, zero, u.values, config, mask);
    rep.inner_iterations += inner.iterations;
    rep.iterations = it;
    if (!inner.converged) {
      rep.message = "linear solve failed: " + inner.message;
      break;
    }
    K.apply(u.values, Ku);
    for (std::size_t j = 0; j < constrained.size(); ++j) {
      const std::size_t i = constrained[j];
      out.multiplier[i] = active[j] ? Ku[i] : 0.0;
    }
  }
  if (!rep.converged && rep.message.empty()) rep.message = "active set did not settle within the iteration limit";
  // KKT residuals.
  K.apply(u.values, Ku);
  double stationarity = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    scale = std::max(scale, std::abs(Ku[i]));
    if (!fixed[i]) stationarity = std::max(stationarity, std::abs(Ku[i] - out.multiplier[i]));
  }
  double comp = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < constrained.size(); ++j) {
    const std::size_t i = constrained[j];
    comp = std::max(comp, std::abs(std::min(u[i] - phi[i], out.multiplier[i])));
    count += active[j];
  }
  out.complementarity = comp;
  rep.active_set = count;
  rep.residual = std::max(comp, scale > 0.0 ? stationarity / scale : stationarity);
  rep.energy = K.quadratic_form(u.values);
  rep.wall_ms = sw.ms();
  out.u = std::move(u);
  return out;
}

struct HomogenizedSolution {
  DiscreteField u;
  SolveReport report;
  std::vector<double> energy_history;
};

/// Minimizes u^T K u + c_n mu \int_Sigma (u - phi)_-^2 over u = psi on Gamma by
/// semismooth Newton with a halving line search.
inline HomogenizedSolution solve_homogenized(const SparseOperator& K, const ProblemData& data, const Mesh& mesh,
                                             const SolverConfig& config) {
  Stopwatch sw;
  if (!(data.mu >= 0.0)) throw DomainError("the surface density mu must be nonnegative (convexity)");
  require(data.c_n >= 0.0, "c_n must be nonnegative");
  const std::size_t N = mesh.num_nodes();
  require(K.rows() == N, "stiffness size does not match the mesh");
  const Grid g = Grid::of(mesh);
  const std::vector<double> psi = detail::node_values(mesh, data.psi, "psi");
  (void)detail::node_values(mesh, data.phi, "phi");
  std::vector<std::uint8_t> fixed(N, 0);
  HomogenizedSolution out;
  out.u = DiscreteField(mesh, 0.0);
  std::vector<double>& u = out.u.values;
  for (std::size_t i = 0; i < N; ++i)
    if (mesh.tag(i) == NodeTag::Gamma) fixed[i] = 1, u[i] = psi[i];
  SolveReport& rep = out.report;
  auto objective = [&](const std::vector<double>& v) { return K.quadratic_form(v) + penalty_energy(g, data, v); };
  std::vector<double> Ku(N), grad(N), step(N), trial(N);
  double res0 = -1.0;
  double J = objective(u);
  out.energy_history.push_back(J);
  for (int it = 0; it <= config.max_outer_iterations; ++it) {
    PenaltyDerivatives pd = assemble_boundary_penalty(g, data, u, K);
    K.apply(u, Ku);
    double res = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      grad[i] = fixed[i] ? 0.0 : 2.0 * Ku[i] + pd.gradient[i];
      res += grad[i] * grad[i];
    }
    res = std::sqrt(res);
    if (res0 < 0.0) res0 = std::max(res, 1e-300);
    rep.residual = res / std::max(res0, 1.0);
    rep.iterations = it;
    if (res <= config.newton_tolerance * std::max(res0, 1.0)) {
      rep.converged = true;
      break;
    }
    if (it == config.max_outer_iterations) break;
    // Newton system (2K + H) s = -grad on the free nodes.
    SparseOperator H = K;
    for (double& v : H.values()) v *= 2.0;
    H.axpy_same_pattern(1.0, pd.hessian);
    std::vector<double> rhs(N);
    for (std::size_t i = 0; i < N; ++i) rhs[i] = -grad[i];
    std::fill(step.begin(), step.end(), 0.0);
    SolverConfig lin = config;
    lin.tolerance = std::min(config.tolerance, 1e-12);
    const SolveReport inner = cg_solve(H, rhs, step, lin, fixed);
    rep.inner_iterations += inner.iterations;
    if (!inner.converged && inner.residual > 1e-6) {
      rep.message = "Newton system solve failed: " + inner.message;
      break;
    }
    double t = 1.0, Jt = 0.0;
    bool accepted = false;
    for (int hv = 0; hv <= config.max_halvings; ++hv, t *= 0.5) {
      for (std::size_t i = 0; i < N; ++i) trial[i] = u[i] + t * step[i];
      Jt = objective(trial);
      if (Jt <= J) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      rep.message = "line search could not decrease the energy";
      break;
    }
    u.swap(trial);
    J = Jt;
    out.energy_history.push_back(J);
  }
  if (!rep.converged && rep.message.empty()) rep.message = "Newton iteration limit reached";
  rep.energy = J;
  rep.wall_ms = sw.ms();
  std::size_t act = 0;
  const std::vector<double> phi = detail::node_values(mesh, data.phi, "phi");
  for (std::size_t i = 0; i < N; ++i)
    if (mesh.tag(i) == NodeTag::SigmaFree && u[i] < phi[i]) ++act;
  rep.active_set = act;
  return out;
}

/// Discrete Dirichlet energy without constraints: u = psi on Gamma, A-harmonic elsewhere.
inline std::pair<DiscreteField, SolveReport> solve_harmonic(const SparseOperator& K, const Field& psi,
                                                            const Mesh& mesh, const SolverConfig& config) {
  const std::size_t N = mesh.num_nodes();
  DiscreteField u(mesh, 0.0);
  std::vector<std::uint8_t> fixed(N, 0);
  for (std::size_t i = 0; i < N; ++i)
    if (mesh.tag(i) == NodeTag::Gamma) fixed[i] = 1, u[i] = psi(mesh.coord(i));
  const std::vector<double> zero(N, 0.0);
  SolveReport rep = cg_solve(K, zero, u.values, config, fixed);
  rep.energy = K.quadratic_form(u.values);
  return {std::move(u), rep};
}

/// \int_D (u_h - f)^2 dx over the cells of u's grid, 2-point Gauss per axis.
template <class F>
double l2_distance_squared(const DiscreteField& u, F&& f) {
  const Grid& g = u.grid;
  const int n = g.n;
  const std::size_t nc = std::size_t{1} << n;
  const double gg = 0.5 / std::sqrt(3.0);
  const double gp[2] = {0.5 - gg, 0.5 + gg};
  double vol = 1.0;
  for (double hi : g.h) vol *= hi;
  std::size_t cells = 1;
  for (int c : g.cells) cells *= static_cast<std::size_t>(c);
  std::vector<int> cell(static_cast<std::size_t>(n), 0), node(static_cast<std::size_t>(n));
  std::vector<double> cv(nc);
  Point x(n);
  double acc = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t a = 0; a < nc; ++a) {
      for (int i = 0; i < n; ++i) node[i] = cell[i] + static_cast<int>((a >> i) & 1u);
      cv[a] = u.values[g.index(node)];
    }
    for (std::size_t q = 0; q < nc; ++q) {
      double uq = 0.0;
      for (std::size_t a = 0; a < nc; ++a) {
        double w = 1.0;
        for (int i = 0; i < n; ++i) {
          const double xi = gp[(q >> i) & 1u];
          w *= ((a >> i) & 1u) ? xi : 1.0 - xi;
        }
        uq += w * cv[a];
      }
      for (int i = 0; i < n; ++i) x(i) = (cell[i] + gp[(q >> i) & 1u]) * g.h[i];
      const double d = uq - f(x);
      acc += d * d * vol / static_cast<double>(nc);
    }
    for (int i = 0; i < n; ++i) {
      if (++cell[i] < g.cells[i]) break;
      cell[i] = 0;
    }
  }
  return acc;
}

/// \int_Sigma (u_h - f)^2 dS, Gauss of order 3 per axis on Sigma faces.
template <class F>
double sigma_l2_distance_squared(const DiscreteField& u, F&& f) {
  const Grid& g = u.grid;
  const detail::FaceRule rule = detail::face_rule(g.n - 1, kSigmaQuadOrder);
  double area = 1.0;
  for (int i = 0; i + 1 < g.n; ++i) area *= g.h[i];
  double acc = 0.0;
  Point x = Point::Zero(g.n);
  detail::for_each_sigma_face(g, [&](const std::vector<std::size_t>& corners, const std::vector<int>& cell) {
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      double uq = 0.0;
      for (std::size_t a = 0; a < corners.size(); ++a) uq += detail::face_shape(a, rule.points[q]) * u.values[corners[a]];
      for (int i = 0; i + 1 < g.n; ++i) x(i) = (cell[i] + rule.points[q][i]) * g.h[i];
      const double d = uq - f(x);
      acc += rule.weights[q] * area * d * d;
    }
  });
  return acc;
}

}  // namespace bhom
