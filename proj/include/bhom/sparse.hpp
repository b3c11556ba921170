#pragma once

#include "bhom/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bhom {

/// Symmetric sparse matrix in compressed row layout.
class SparseOperator {
 public:
  SparseOperator() = default;
  SparseOperator(std::size_t n, std::vector<std::size_t> row_ptr, std::vector<std::uint32_t> cols)
      : n_(n), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)), vals_(cols_.size(), 0.0) {
    require(row_ptr_.size() == n_ + 1 && row_ptr_.back() == cols_.size(), "inconsistent CSR structure");
  }

  std::size_t rows() const { return n_; }
  std::size_t nnz() const { return cols_.size(); }
  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::uint32_t>& cols() const { return cols_; }
  std::vector<double>& values() { return vals_; }
  const std::vector<double>& values() const { return vals_; }

  /// Position of (i, j) in the value array; the entry must exist.
  std::size_t find(std::size_t i, std::size_t j) const {
    const auto b = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto e = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    const auto it = std::lower_bound(b, e, static_cast<std::uint32_t>(j));
    require(it != e && *it == j, "sparse entry outside the pattern");
    return static_cast<std::size_t>(it - cols_.begin());
  }

  void add(std::size_t i, std::size_t j, double v) { vals_[find(i, j)] += v; }

  double at(std::size_t i, std::size_t j) const {
    const auto b = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto e = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    const auto it = std::lower_bound(b, e, static_cast<std::uint32_t>(j));
    return (it != e && *it == j) ? vals_[static_cast<std::size_t>(it - cols_.begin())] : 0.0;
  }

  void apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) acc += vals_[p] * x[cols_[p]];
      y[i] = acc;
    }
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(n_);
    apply(x, y);
    return y;
  }

  double quadratic_form(std::span<const double> x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double row = 0.0;
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) row += vals_[p] * x[cols_[p]];
      acc += x[i] * row;
    }
    return acc;
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) d[i] = at(i, i);
    return d;
  }

  /// Same pattern, values scaled and zeroed.
  SparseOperator zero_like() const {
    SparseOperator z = *this;
    std::fill(z.vals_.begin(), z.vals_.end(), 0.0);
    return z;
  }

  /// this += alpha * other; both must share the pattern.
  void axpy_same_pattern(double alpha, const SparseOperator& other) {
    require(other.n_ == n_ && other.cols_.size() == cols_.size(), "operators do not share a pattern");
    for (std::size_t p = 0; p < vals_.size(); ++p) vals_[p] += alpha * other.vals_[p];
  }

  double max_asymmetry() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
        worst = std::max(worst, std::abs(vals_[p] - at(cols_[p], i)));
    return worst;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> cols_;
  std::vector<double> vals_;
};

struct SolverConfig {
  double tolerance = 1e-10;        // relative residual for CG
  int max_iterations = 20000;      // CG iterations
  int max_outer_iterations = 100;  // PDAS / Newton iterations
  double pdas_c = 0.0;             // <= 0: 1e3 * mean diagonal of K
  double newton_tolerance = 1e-10; // first-order residual, relative to the initial one
  int max_halvings = 30;
};

struct SolveReport {
  int iterations = 0;        // outer iterations (CG iterations for plain CG solves)
  long inner_iterations = 0; // accumulated CG iterations
  double residual = 0.0;
  double energy = 0.0;
  std::size_t active_set = 0;
  double wall_ms = 0.0;
  bool converged = false;
  std::string message;
};

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

/// Jacobi-preconditioned conjugate gradients for K x = rhs restricted to the
/// free entries (`fixed[i] != 0` pins x[i] at its incoming value; those rows
/// of rhs are ignored). `x` is the initial guess and receives the solution.
/// Stops at ||r|| <= tolerance * ||rhs_free - K_ff x_fixed-part||_0 measured
/// against the initial residual scale.
inline SolveReport cg_solve(const SparseOperator& K, std::span<const double> rhs, std::span<double> x,
                            const SolverConfig& config, std::span<const std::uint8_t> fixed = {}) {
  Stopwatch sw;
  const std::size_t n = K.rows();
  require(rhs.size() == n && x.size() == n, "cg_solve: vector sizes do not match the operator");
  require(fixed.empty() || fixed.size() == n, "cg_solve: mask size does not match the operator");
  auto is_free = [&](std::size_t i) { return fixed.empty() || fixed[i] == 0; };
  std::vector<double> r(n), z(n), p(n), q(n);
  const std::vector<double> diag = K.diagonal();
  K.apply(x, q);
  double bnorm2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_free(i)) {
      r[i] = rhs[i] - q[i];
      bnorm2 += rhs[i] * rhs[i];
    } else {
      r[i] = 0.0;
    }
  }
  SolveReport rep;
  auto norm = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
  };
  double rnorm = norm(r);
  // Scale: the larger of the right-hand side and the initial residual.
  const double scale = std::max(std::sqrt(bnorm2), rnorm);
  if (scale == 0.0 || rnorm <= config.tolerance * scale) {
    rep.converged = true;
    rep.residual = scale == 0.0 ? 0.0 : rnorm / scale;
    rep.wall_ms = sw.ms();
    return rep;
  }
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = is_free(i) && diag[i] > 0.0 ? r[i] / diag[i] : 0.0;
    p[i] = z[i];
  }
  double rz = 0.0;
  for (std::size_t i = 0; i < n; ++i) rz += r[i] * z[i];
  for (int it = 1; it <= config.max_iterations; ++it) {
    K.apply(p, q);
    double pq = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (is_free(i)) pq += p[i] * q[i];
    if (!(pq > 0.0)) {
      rep.iterations = it;
      rep.residual = rnorm / scale;
      rep.message = "negative or zero curvature: operator is not positive definite on the free entries";
      rep.wall_ms = sw.ms();
      return rep;
    }
    const double alpha = rz / pq;
    for (std::size_t i = 0; i < n; ++i) {
      if (!is_free(i)) continue;
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    rnorm = norm(r);
    rep.iterations = it;
    if (rnorm <= config.tolerance * scale) {
      rep.converged = true;
      break;
    }
    double rz_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = is_free(i) && diag[i] > 0.0 ? r[i] / diag[i] : 0.0;
      rz_new += r[i] * z[i];
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  rep.inner_iterations = rep.iterations;
  rep.residual = rnorm / scale;
  if (!rep.converged) rep.message = "maximum CG iterations reached";
  rep.wall_ms = sw.ms();
  return rep;
}

inline std::pair<std::vector<double>, SolveReport> cg_solve(const SparseOperator& K, std::span<const double> rhs,
                                                            const SolverConfig& config,
                                                            std::span<const std::uint8_t> fixed = {}) {
  std::vector<double> x(K.rows(), 0.0);
  SolveReport rep = cg_solve(K, rhs, x, config, fixed);
  return {std::move(x), rep};
}

}  // namespace bhom
