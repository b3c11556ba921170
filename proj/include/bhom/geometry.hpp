#pragma once

#include "bhom/kernel.hpp"
#include "bhom/types.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

namespace bhom {

/// How the box boundary splits into the Dirichlet part Gamma and the
/// obstacle part Sigma = {x_n = 0}.
enum class BoundaryMode {
  DirichletRest,  // Gamma = every face except Sigma
  PeriodicTop,    // Gamma = top face {x_n = L_n}; lateral faces identified periodically
};

struct DomainSpec {
  int n = 3;
  std::vector<double> extents;  // one per axis; empty means the unit box
  BoundaryMode mode = BoundaryMode::DirichletRest;

  static DomainSpec unit_box(int n, BoundaryMode mode = BoundaryMode::DirichletRest) {
    return DomainSpec{n, std::vector<double>(static_cast<std::size_t>(n), 1.0), mode};
  }

  bool lateral_periodic() const { return mode == BoundaryMode::PeriodicTop; }
  double extent(int axis) const { return extents.empty() ? 1.0 : extents[static_cast<std::size_t>(axis)]; }

  /// Measure of Sigma.
  double sigma_area() const {
    double a = 1.0;
    for (int i = 0; i + 1 < n; ++i) a *= extent(i);
    return a;
  }

  void validate() const {
    require(n >= 3, "dimension must be at least 3");
    require(n <= kMaxDim, "dimension exceeds the supported maximum");
    require(extents.empty() || static_cast<int>(extents.size()) == n, "box extents need one entry per axis");
    for (double e : extents) require(e > 0.0 && std::isfinite(e), "box extents must be positive");
  }
};

/// Periodic lattice of boundary patches B_{r_k}(x_k) on Sigma with spacing 2*eps,
/// centers at 2 eps (i + 1/2) along each lateral axis and radii
/// r_k = tilde_r_k * eps^{(n-1)/(n-2)}.
class PatchLayout {
 public:
  PatchLayout() = default;

  double epsilon() const { return eps_; }
  int dim() const { return spec_.n; }
  const DomainSpec& domain() const { return spec_; }
  const CoefficientField& metric() const { return metric_; }
  std::size_t size() const { return centers_.size(); }
  bool empty() const { return centers_.empty(); }
  const Point& center(std::size_t k) const { return centers_[k]; }
  double radius(std::size_t k) const { return radii_[k]; }
  double tilde_r(std::size_t k) const { return tilde_r_[k]; }
  const std::vector<double>& radii() const { return radii_; }
  const std::vector<double>& tilde_radii() const { return tilde_r_; }
  double c1() const { return c1_; }
  double c2() const { return c2_; }
  bool uniform_tilde_r() const {
    for (double t : tilde_r_)
      if (t != tilde_r_.front()) return false;
    return true;
  }
  double min_radius() const { return radii_.empty() ? 0.0 : *std::min_element(radii_.begin(), radii_.end()); }
  /// Lattice counts along the lateral axes 0..n-2.
  const std::vector<int>& lattice_counts() const { return counts_; }

  double metric_distance(const Point& x, const Point& y) const {
    const Point d = x - y;
    return std::sqrt(std::max(0.0, d.dot(metric_.A_inv() * d)));
  }

  /// Lateral lattice index range whose metric balls of radius `reach * eps`
  /// may contain x, clipped to the lattice.
  template <class Fn>
  void for_each_candidate(const Point& x, double reach, Fn&& fn) const {
    const int m = spec_.n - 1;
    std::vector<int> lo(static_cast<std::size_t>(m)), hi(static_cast<std::size_t>(m));
    const double pitch = 2.0 * eps_;
    for (int i = 0; i < m; ++i) {
      const double half_width = reach * eps_ * std::sqrt(metric_.A()(i, i));
      lo[i] = std::max(0, static_cast<int>(std::floor((x(i) - half_width) / pitch)));
      hi[i] = std::min(counts_[i] - 1, static_cast<int>(std::floor((x(i) + half_width) / pitch)));
      if (lo[i] > hi[i]) return;
    }
    std::vector<int> idx = lo;
    while (true) {
      std::size_t k = 0, stride = 1;
      for (int i = 0; i < m; ++i) {
        k += static_cast<std::size_t>(idx[i]) * stride;
        stride *= static_cast<std::size_t>(counts_[i]);
      }
      fn(k);
      int a = 0;
      while (a < m && ++idx[a] > hi[a]) idx[a] = lo[a], ++a;
      if (a == m) break;
    }
  }

  /// Index of the patch whose closed ball of radius `scale * eps` (metric)
  /// contains x, or -1. Balls of radius eps are pairwise disjoint.
  long find_patch_within_eps(const Point& x, double scale = 1.0) const {
    long hit = -1;
    double best = 0.0;
    for_each_candidate(x, scale, [&](std::size_t k) {
      const double d = metric_distance(x, centers_[k]);
      if (d <= scale * eps_ && (hit < 0 || d < best)) hit = static_cast<long>(k), best = d;
    });
    return hit;
  }

  friend PatchLayout build_layout(const DomainSpec& spec, double epsilon, const std::vector<double>& tilde_r,
                                  double c1, double c2, const CoefficientField& metric);

 private:
  DomainSpec spec_;
  CoefficientField metric_ = CoefficientField::identity(3);
  double eps_ = 0.0;
  double c1_ = 0.0, c2_ = 0.0;
  std::vector<Point> centers_;
  std::vector<double> radii_;
  std::vector<double> tilde_r_;
  std::vector<int> counts_;
};

/// Critical radius r = tilde_r * eps^{(n-1)/(n-2)}.
inline double critical_radius(int n, double epsilon, double tilde_r) {
  return tilde_r * std::pow(epsilon, (n - 1.0) / (n - 2.0));
}

/// `tilde_r` holds one value (uniform) or one value per patch in lattice order.
inline PatchLayout build_layout(const DomainSpec& spec, double epsilon, const std::vector<double>& tilde_r,
                                double c1, double c2, const CoefficientField& metric) {
  spec.validate();
  require(epsilon > 0.0 && std::isfinite(epsilon), "epsilon must be positive");
  require(c1 > 0.0 && c2 >= c1, "patch radius bounds need 0 < c1 <= c2");
  require(metric.dim() == spec.n, "coefficient dimension does not match the domain");
  require(!tilde_r.empty(), "tilde_r must be given");
  const int n = spec.n;
  PatchLayout out;
  out.spec_ = spec;
  out.metric_ = metric;
  out.eps_ = epsilon;
  out.c1_ = c1;
  out.c2_ = c2;
  std::size_t total = 1;
  for (int i = 0; i + 1 < n; ++i) {
    const double cells = spec.extent(i) / (2.0 * epsilon);
    if (cells < 1.0 - 1e-9) {
      std::ostringstream os;
      os << "epsilon " << epsilon << " too large for the box: no patch fits along axis " << i;
      throw DomainError(os.str());
    }
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells)) {
      std::ostringstream os;
      os << "2*epsilon does not divide the Sigma extent along axis " << i;
      throw DomainError(os.str());
    }
    out.counts_.push_back(static_cast<int>(rounded));
    total *= static_cast<std::size_t>(rounded);
  }
  require(tilde_r.size() == 1 || tilde_r.size() == total, "tilde_r must be a single value or one per patch");
  out.centers_.reserve(total);
  std::vector<int> idx(static_cast<std::size_t>(n - 1), 0);
  for (std::size_t k = 0; k < total; ++k) {
    Point c = Point::Zero(n);
    for (int i = 0; i + 1 < n; ++i) c(i) = 2.0 * epsilon * (idx[i] + 0.5);
    out.centers_.push_back(c);
    const double tr = tilde_r.size() == 1 ? tilde_r[0] : tilde_r[k];
    if (!(tr >= c1 && tr <= c2)) {
      std::ostringstream os;
      os << "tilde_r " << tr << " outside [c1, c2] = [" << c1 << ", " << c2 << "]";
      throw DomainError(os.str());
    }
    const double r = critical_radius(n, epsilon, tr);
    if (!(r < epsilon)) {
      std::ostringstream os;
      os << "patch radius r_eps = " << r << " is not below epsilon = " << epsilon;
      throw DomainError(os.str());
    }
    out.tilde_r_.push_back(tr);
    out.radii_.push_back(r);
    for (int a = 0; a + 1 < n; ++a) {
      if (++idx[a] < out.counts_[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

inline PatchLayout build_layout(const DomainSpec& spec, double epsilon, double tilde_r, double c1 = 0.5,
                                double c2 = 2.0) {
  return build_layout(spec, epsilon, std::vector<double>{tilde_r}, c1, c2, CoefficientField::identity(spec.n));
}

/// x in T_eps: x lies in the closed box and within metric distance r_k of
/// some center (closed balls).
inline bool in_T_eps(const PatchLayout& layout, const Point& x) {
  const DomainSpec& spec = layout.domain();
  for (int i = 0; i < spec.n; ++i)
    if (x(i) < 0.0 || x(i) > spec.extent(i)) return false;
  bool hit = false;
  layout.for_each_candidate(x, 1.0, [&](std::size_t k) {
    if (layout.metric_distance(x, layout.center(k)) <= layout.radius(k) * (1.0 + 1e-12)) hit = true;
  });
  return hit;
}

enum class NodeTag : std::uint8_t { Interior = 0, Gamma = 1, SigmaFree = 2, SigmaPatch = 3 };

/// Structured tensor-product mesh of the box with n-dimensional multilinear
/// cells. Nodes are numbered lexicographically with axis 0 fastest. Along
/// periodic axes the node at x = L is identified with x = 0 and not stored.
class Mesh {
 public:
  int dim() const { return n_; }
  const DomainSpec& domain() const { return spec_; }
  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_cells() const { return num_cells_; }
  int cells(int axis) const { return cells_[axis]; }
  int nodes_along(int axis) const { return node_counts_[axis]; }
  double spacing(int axis) const { return h_[axis]; }
  bool periodic(int axis) const { return periodic_[axis]; }
  NodeTag tag(std::size_t node) const { return tags_[node]; }
  const std::vector<NodeTag>& tags() const { return tags_; }
  /// Patch index for Sigma-patch nodes, -1 otherwise.
  long patch_of(std::size_t node) const { return patch_[node]; }

  std::size_t node_index(const std::vector<int>& multi) const {
    std::size_t k = 0, stride = 1;
    for (int i = 0; i < n_; ++i) {
      k += static_cast<std::size_t>(multi[i]) * stride;
      stride *= static_cast<std::size_t>(node_counts_[i]);
    }
    return k;
  }

  void node_multi(std::size_t node, std::vector<int>& multi) const {
    multi.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) {
      multi[i] = static_cast<int>(node % static_cast<std::size_t>(node_counts_[i]));
      node /= static_cast<std::size_t>(node_counts_[i]);
    }
  }

  Point coord(std::size_t node) const {
    Point x(n_);
    for (int i = 0; i < n_; ++i) {
      x(i) = static_cast<double>(node % static_cast<std::size_t>(node_counts_[i])) * h_[i];
      node /= static_cast<std::size_t>(node_counts_[i]);
    }
    return x;
  }

  /// Node index of a grid position that may run one past the end along a
  /// periodic axis.
  std::size_t wrapped_index(const std::vector<int>& grid) const {
    std::size_t k = 0, stride = 1;
    for (int i = 0; i < n_; ++i) {
      int g = grid[i];
      if (periodic_[i]) g %= node_counts_[i];
      k += static_cast<std::size_t>(g) * stride;
      stride *= static_cast<std::size_t>(node_counts_[i]);
    }
    return k;
  }

  /// Calls fn(cell_origin_multi, corner_nodes) for every cell. Corner a has
  /// offset bit i = (a >> i) & 1 along axis i.
  template <class Fn>
  void for_each_cell(Fn&& fn) const {
    std::vector<int> cell(static_cast<std::size_t>(n_), 0), grid(static_cast<std::size_t>(n_));
    std::vector<std::size_t> corners(static_cast<std::size_t>(1) << n_);
    for (std::size_t c = 0; c < num_cells_; ++c) {
      for (std::size_t a = 0; a < corners.size(); ++a) {
        for (int i = 0; i < n_; ++i) grid[i] = cell[i] + static_cast<int>((a >> i) & 1u);
        corners[a] = wrapped_index(grid);
      }
      fn(static_cast<const std::vector<int>&>(cell), static_cast<const std::vector<std::size_t>&>(corners));
      for (int i = 0; i < n_; ++i) {
        if (++cell[i] < cells_[i]) break;
        cell[i] = 0;
      }
    }
  }

  /// Number of Sigma-patch nodes per patch.
  std::vector<std::size_t> patch_node_counts(std::size_t num_patches) const {
    std::vector<std::size_t> counts(num_patches, 0);
    for (std::size_t i = 0; i < num_nodes_; ++i)
      if (patch_[i] >= 0) ++counts[static_cast<std::size_t>(patch_[i])];
    return counts;
  }

  friend struct MeshBuilder;

 private:
  int n_ = 0;
  DomainSpec spec_;
  std::vector<int> cells_, node_counts_;
  std::vector<double> h_;
  std::vector<bool> periodic_;
  std::size_t num_nodes_ = 0, num_cells_ = 0;
  std::vector<NodeTag> tags_;
  std::vector<long> patch_;
};

struct MeshOptions {
  bool resolution_override = false;
  std::size_t node_cap = 20'000'000;
};

struct MeshBuilder {
  static Mesh build(const DomainSpec& spec, const PatchLayout* layout, double h, const MeshOptions& opt) {
    spec.validate();
    require(h > 0.0 && std::isfinite(h), "mesh spacing must be positive");
    const int n = spec.n;
    if (layout != nullptr && !layout->empty() && !opt.resolution_override && h > layout->min_radius() / 2.0 * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "mesh spacing h = " << h << " does not resolve the smallest patch radius " << layout->min_radius()
         << " (need h <= r_min/2, or pass the resolution override)";
      throw DomainError(os.str());
    }
    Mesh m;
    m.n_ = n;
    m.spec_ = spec;
    m.num_nodes_ = 1;
    m.num_cells_ = 1;
    for (int i = 0; i < n; ++i) {
      const double L = spec.extent(i);
      const int cells = static_cast<int>(std::llround(L / h));
      require(cells >= 1, "mesh spacing larger than the box");
      const bool per = spec.lateral_periodic() && i + 1 < n;
      m.cells_.push_back(cells);
      m.h_.push_back(L / cells);
      m.periodic_.push_back(per);
      m.node_counts_.push_back(per ? cells : cells + 1);
      const double nodes = static_cast<double>(m.num_nodes_) * m.node_counts_.back();
      if (nodes > static_cast<double>(opt.node_cap)) {
        std::ostringstream os;
        os << "mesh would exceed the node cap of " << opt.node_cap << " nodes";
        throw DomainError(os.str());
      }
      m.num_nodes_ *= static_cast<std::size_t>(m.node_counts_.back());
      m.num_cells_ *= static_cast<std::size_t>(cells);
    }
    m.tags_.assign(m.num_nodes_, NodeTag::Interior);
    m.patch_.assign(m.num_nodes_, -1);
    std::vector<int> multi;
    for (std::size_t k = 0; k < m.num_nodes_; ++k) {
      m.node_multi(k, multi);
      bool gamma = multi[n - 1] == m.cells_[n - 1];
      if (!spec.lateral_periodic())
        for (int i = 0; i + 1 < n; ++i) gamma = gamma || multi[i] == 0 || multi[i] == m.cells_[i];
      if (gamma)
        m.tags_[k] = NodeTag::Gamma;
      else if (multi[n - 1] == 0)
        m.tags_[k] = NodeTag::SigmaFree;
    }
    if (layout != nullptr && !layout->empty()) {
      require(layout->dim() == n, "layout dimension does not match the domain");
      // Scan the bounding box of each patch on the Sigma node layer.
      for (std::size_t p = 0; p < layout->size(); ++p) {
        const Point& c = layout->center(p);
        const double r = layout->radius(p);
        std::vector<int> lo(static_cast<std::size_t>(n - 1)), hi(static_cast<std::size_t>(n - 1));
        for (int i = 0; i + 1 < n; ++i) {
          const double reach = r * std::sqrt(layout->metric().A()(i, i)) * (1.0 + 1e-12);
          lo[i] = static_cast<int>(std::ceil((c(i) - reach) / m.h_[i] - 1e-9));
          hi[i] = static_cast<int>(std::floor((c(i) + reach) / m.h_[i] + 1e-9));
          lo[i] = std::max(lo[i], 0);
          hi[i] = std::min(hi[i], m.cells_[i]);
        }
        std::vector<int> g = lo;
        g.push_back(0);
        bool done = false;
        for (int i = 0; i + 1 < n; ++i) done = done || lo[i] > hi[i];
        while (!done) {
          Point x(n);
          for (int i = 0; i < n; ++i) x(i) = g[i] * m.h_[i];
          if (layout->metric_distance(x, c) <= r * (1.0 + 1e-12)) {
            const std::size_t k = m.wrapped_index(g);
            if (m.tags_[k] == NodeTag::Gamma)
              throw DomainError("a Sigma-patch node coincides with a Dirichlet node");
            m.tags_[k] = NodeTag::SigmaPatch;
            m.patch_[k] = static_cast<long>(p);
          }
          int a = 0;
          while (a < n - 1 && ++g[a] > hi[a]) g[a] = lo[a], ++a;
          if (a == n - 1) done = true;
        }
      }
    }
    return m;
  }
};

/// Structured mesh of the domain with Sigma-patch tags from `layout`.
/// Without the resolution override, requires h <= r_min / 2 and then every
/// patch holds at least one tagged node.
inline Mesh build_mesh(const DomainSpec& spec, const PatchLayout& layout, double h, const MeshOptions& opt = {}) {
  Mesh m = MeshBuilder::build(spec, &layout, h, opt);
  if (!opt.resolution_override) {
    const auto counts = m.patch_node_counts(layout.size());
    for (std::size_t c : counts) require(c >= 1, "a patch holds no Sigma node");
  }
  return m;
}

/// Mesh without patches (homogenized problem).
inline Mesh build_mesh(const DomainSpec& spec, double h, const MeshOptions& opt = {}) {
  return MeshBuilder::build(spec, nullptr, h, opt);
}

}  // namespace bhom
