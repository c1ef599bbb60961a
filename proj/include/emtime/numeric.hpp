#pragma once

// Small numerical kernels shared across the library: quadrature on uniform
// grids, adaptive quadrature on callables, natural cubic splines, and a few
// matrix diagnostics. Everything is deterministic and single threaded.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace emt {

using Complex = std::complex<double>;

// Thrown when input data or model definitions are malformed.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an algorithm cannot meet its numerical contract
// (non-convergence, step-size underflow, out-of-range evaluation, ...).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Composite trapezoid rule on uniformly spaced samples.
template <typename Derived>
double trapezoid(const Eigen::MatrixBase<Derived>& values, double spacing) {
  const auto n = values.size();
  if (n < 2) return 0.0;
  double interior = 0.0;
  for (Eigen::Index i = 1; i + 1 < n; ++i) interior += values(i);
  return spacing * (0.5 * (values(0) + values(n - 1)) + interior);
}

// Running trapezoid integral; element i holds the integral from sample 0 to i.
template <typename Derived>
Eigen::VectorXd cumulative_trapezoid(const Eigen::MatrixBase<Derived>& values,
                                     double spacing) {
  Eigen::VectorXd out(values.size());
  if (values.size() == 0) return out;
  out(0) = 0.0;
  for (Eigen::Index i = 1; i < values.size(); ++i)
    out(i) = out(i - 1) + 0.5 * spacing * (values(i - 1) + values(i));
  return out;
}

// Adaptive Simpson quadrature for a scalar callable. The error estimate is the
// usual Richardson comparison of one parent panel against its two children;
// recursion stops once the local defect is below the local tolerance share.
double adaptive_integral(const std::function<double(double)>& f, double a,
                         double b, double tol = 1e-10);

// Trapezoid quadrature that keeps doubling the sample count until the value
// changes by less than rel_tol (relative to max(1, |I|)). Robust for mildly
// singular integrands at the cost of many evaluations near the cap.
double refined_trapezoid(const std::function<double(double)>& f, double a,
                         double b, double rel_tol = 1e-10,
                         int max_doublings = 22);

// Largest absolute deviation from Hermitian symmetry.
template <typename Derived>
double hermiticity_error(const Eigen::MatrixBase<Derived>& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

// Natural cubic spline through strictly increasing abscissae. Evaluation
// outside the table range is a contract violation, not extrapolation.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

  double at(double x) const;
  double derivative(double x) const;
  bool empty() const { return x_.size() == 0; }
  double x_min() const { return x_(0); }
  double x_max() const { return x_(x_.size() - 1); }

 private:
  Eigen::Index segment(double x) const;
  Eigen::VectorXd x_, y_, m_;  // m_ holds second derivatives at the knots
};

// Piecewise linear interpolation on strictly increasing abscissae.
double linear_interp(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     double xq);

// FNV-1a 64-bit hash, used for config and output checksums.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& text);

// Formats a double with 17 significant digits, enough to round-trip binary64.
std::string format_full(double value);

}  // namespace emt
