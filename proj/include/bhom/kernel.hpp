#pragma once

#include "bhom/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>
#include <vector>

namespace bhom {

/// Constant symmetric coefficient matrix gamma of the energy |gamma grad v|^2,
/// together with A = gamma^T gamma and the ellipticity bounds a I <= gamma <= b I.
class CoefficientField {
 public:
  enum class Mode { Identity, Matrix };

  static CoefficientField identity(int n) {
    require(n >= 1 && n <= kMaxDim, "dimension out of range");
    Matrix g = Matrix::Identity(n, n);
    return CoefficientField(Mode::Identity, g);
  }

  /// `gamma` must be symmetric with strictly positive spectrum.
  static CoefficientField matrix(const Matrix& gamma) { return CoefficientField(Mode::Matrix, gamma); }

  /// Row-major n*n entries.
  static CoefficientField from_row_major(int n, const std::vector<double>& entries) {
    require(static_cast<int>(entries.size()) == n * n, "gamma needs n*n entries");
    Matrix g(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = entries[static_cast<std::size_t>(i * n + j)];
    return matrix(g);
  }

  Mode mode() const { return mode_; }
  int dim() const { return static_cast<int>(gamma_.rows()); }
  const Matrix& gamma() const { return gamma_; }
  const Matrix& A() const { return a_mat_; }
  const Matrix& A_inv() const { return a_inv_; }
  double lower_bound() const { return lo_; }
  double upper_bound() const { return hi_; }
  /// sqrt(det A) = det gamma, the volume factor of the metric-ball map x = c + gamma y.
  double volume_factor() const { return det_gamma_; }
  double trace_A() const { return a_mat_.trace(); }
  bool is_identity() const { return mode_ == Mode::Identity; }

 private:
  CoefficientField(Mode mode, const Matrix& gamma) : mode_(mode), gamma_(gamma) {
    const int n = static_cast<int>(gamma.rows());
    require(n >= 1 && n <= kMaxDim && gamma.cols() == n, "gamma must be a square matrix of supported size");
    require(gamma.allFinite(), "gamma entries must be finite");
    const double asym = (gamma - gamma.transpose()).cwiseAbs().maxCoeff();
    require(asym <= 1e-12 * std::max(1.0, gamma.cwiseAbs().maxCoeff()), "gamma must be symmetric");
    gamma_ = 0.5 * (gamma + gamma.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(gamma_);
    lo_ = es.eigenvalues().minCoeff();
    hi_ = es.eigenvalues().maxCoeff();
    if (!(lo_ > 0.0)) {
      std::ostringstream os;
      os << "ellipticity assumption a*I <= gamma <= b*I violated: smallest eigenvalue of gamma is " << lo_;
      throw DomainError(os.str());
    }
    a_mat_ = gamma_.transpose() * gamma_;
    a_inv_ = a_mat_.inverse();
    det_gamma_ = es.eigenvalues().prod();
  }

  Mode mode_;
  Matrix gamma_;
  Matrix a_mat_;
  Matrix a_inv_;
  double lo_ = 1.0, hi_ = 1.0, det_gamma_ = 1.0;
};

/// Truncated Green-kernel expansion
///   Phi(x, y) = sum_i C_i d(x, y)^{2 - n + (i - 1)},   d^2 = (x - y)^T A^{-1} (x - y).
/// With C = [1] this is the (unnormalized) fundamental solution of div(A grad .).
class GreenKernel {
 public:
  explicit GreenKernel(CoefficientField coeff, std::vector<double> value_coeffs = {1.0},
                       std::vector<double> gradient_coeffs = {})
      : coeff_(std::move(coeff)), c_(std::move(value_coeffs)), c_prime_(std::move(gradient_coeffs)) {
    require(!c_.empty(), "kernel needs at least one value coefficient");
    for (double v : c_) require(std::isfinite(v), "kernel value coefficients must be finite");
    const int n = coeff_.dim();
    if (c_prime_.empty()) {
      c_prime_.resize(c_.size());
      for (std::size_t i = 0; i < c_.size(); ++i) c_prime_[i] = (static_cast<double>(i) + 2.0 - n) * c_[i];
    }
    for (double v : c_prime_) require(std::isfinite(v), "kernel gradient coefficients must be finite");
  }

  const CoefficientField& coefficients() const { return coeff_; }
  int dim() const { return coeff_.dim(); }
  const std::vector<double>& value_coeffs() const { return c_; }
  /// {C'_i}: coefficients of d^{1-n+(i-1)} in the radial derivative. Defaults to
  /// (i + 1 - n) C_i, the exact derivative of the value series.
  const std::vector<double>& gradient_coeffs() const { return c_prime_; }

  bool is_default() const { return c_.size() == 1 && c_[0] == 1.0; }

  double metric_distance(const Point& x, const Point& y) const {
    const Point diff = x - y;
    return std::sqrt(std::max(0.0, diff.dot(coeff_.A_inv() * diff)));
  }

  /// Phi as a function of the metric distance.
  double value_at(double d) const {
    const int n = dim();
    double acc = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) acc += c_[i] * std::pow(d, 2.0 - n + static_cast<double>(i));
    return acc;
  }

  /// dPhi/dd of the truncated series.
  double derivative_at(double d) const {
    const int n = dim();
    double acc = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) {
      const double p = 2.0 - n + static_cast<double>(i);
      if (p != 0.0) acc += c_[i] * p * std::pow(d, p - 1.0);
    }
    return acc;
  }

  double green_value(const Point& x, const Point& y) const {
    const double d = metric_distance(x, y);
    if (d == 0.0) throw DomainError("green_value: coincident points (kernel singularity)");
    return value_at(d);
  }

  /// Exact gradient in x of the truncated series: Phi'(d) A^{-1}(x - y) / d.
  Vector green_gradient(const Point& x, const Point& y) const {
    const double d = metric_distance(x, y);
    if (d == 0.0) throw DomainError("green_gradient: coincident points (kernel singularity)");
    return (derivative_at(d) / d) * (coeff_.A_inv() * (x - y));
  }

  /// Second-order finite-difference evaluation of div(A grad Phi(., y)) at x.
  double laplace_beltrami_residual(const Point& x, const Point& y, double step) const {
    const double d = metric_distance(x, y);
    if (d == 0.0) throw DomainError("laplace_beltrami_residual: coincident points");
    require(step > 0.0, "finite-difference step must be positive");
    // Euclidean stencil reach is sqrt(2) * step; compare with the Euclidean
    // distance to the singularity.
    if (!(step < (x - y).norm() / 4.0)) throw DomainError("finite-difference step must be below d/4");
    const int n = dim();
    const Matrix& A = coeff_.A();
    auto f = [&](const Point& p) { return green_value(p, y); };
    const double f0 = f(x);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      Point xp = x, xm = x;
      xp(i) += step;
      xm(i) -= step;
      acc += A(i, i) * (f(xp) - 2.0 * f0 + f(xm)) / (step * step);
      for (int j = i + 1; j < n; ++j) {
        if (A(i, j) == 0.0) continue;
        Point pp = x, pm = x, mp = x, mm = x;
        pp(i) += step, pp(j) += step;
        pm(i) += step, pm(j) -= step;
        mp(i) -= step, mp(j) += step;
        mm(i) -= step, mm(j) -= step;
        acc += 2.0 * A(i, j) * (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * step * step);
      }
    }
    return acc;
  }

 private:
  CoefficientField coeff_;
  std::vector<double> c_;
  std::vector<double> c_prime_;
};

}  // namespace bhom
