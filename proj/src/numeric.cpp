#include "emtime/numeric.hpp"

#include <cstdint>
#include <cstdio>

namespace emt {

namespace {

double simpson(double fa, double fm, double fb, double h) {
  return h / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_step(const std::function<double(double)>& f, double a,
                     double b, double fa, double fm, double fb, double whole,
                     double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(fa, flm, fm, m - a);
  const double right = simpson(fm, frm, fb, b - m);
  const double delta = left + right - whole;
  if (depth >= 52 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace

double adaptive_integral(const std::function<double(double)>& f, double a,
                         double b, double tol) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double m = 0.5 * (a + b);
  const double fm = f(m);
  const double fb = f(b);
  const double whole = simpson(fa, fm, fb, b - a);
  return adaptive_step(f, a, b, fa, fm, fb, whole, tol, 0);
}

double refined_trapezoid(const std::function<double(double)>& f, double a,
                         double b, double rel_tol, int max_doublings) {
  if (a == b) return 0.0;
  double value = 0.5 * (b - a) * (f(a) + f(b));
  std::int64_t panels = 1;
  for (int pass = 0; pass < max_doublings; ++pass) {
    // Add the midpoints of the current panels; previous samples are reused
    // through the running value, so each pass costs only the new points.
    const double h = (b - a) / static_cast<double>(panels);
    double added = 0.0;
    for (std::int64_t j = 0; j < panels; ++j)
      added += f(a + (static_cast<double>(j) + 0.5) * h);
    const double refined = 0.5 * value + 0.5 * h * added;
    const double change = std::abs(refined - value);
    value = refined;
    panels *= 2;
    if (pass > 0 && change <= rel_tol * std::max(1.0, std::abs(value)))
      return value;
  }
  return value;
}

CubicSpline::CubicSpline(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
    : x_(x), y_(y) {
  const Eigen::Index n = x.size();
  if (n < 2 || y.size() != n)
    throw std::invalid_argument("spline: need at least two matched knots");
  for (Eigen::Index i = 1; i < n; ++i)
    if (!(x(i) > x(i - 1)))
      throw std::invalid_argument("spline: abscissae must strictly increase");

  // Natural boundary conditions: zero curvature at both ends. The second
  // derivatives solve a tridiagonal system assembled from continuity of the
  // first derivative at the interior knots.
  m_ = Eigen::VectorXd::Zero(n);
  if (n == 2) return;
  Eigen::VectorXd diag(n - 2), rhs(n - 2), lower(n - 2), upper(n - 2);
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    const double hl = x(i) - x(i - 1);
    const double hr = x(i + 1) - x(i);
    lower(i - 1) = hl / 6.0;
    diag(i - 1) = (hl + hr) / 3.0;
    upper(i - 1) = hr / 6.0;
    rhs(i - 1) = (y(i + 1) - y(i)) / hr - (y(i) - y(i - 1)) / hl;
  }
  // Thomas sweep; the system is symmetric positive definite.
  for (Eigen::Index i = 1; i < n - 2; ++i) {
    const double w = lower(i) / diag(i - 1);
    diag(i) -= w * upper(i - 1);
    rhs(i) -= w * rhs(i - 1);
  }
  m_(n - 2) = rhs(n - 3) / diag(n - 3);
  for (Eigen::Index i = n - 4; i >= 0; --i)
    m_(i + 1) = (rhs(i) - upper(i) * m_(i + 2)) / diag(i);
}

Eigen::Index CubicSpline::segment(double x) const {
  if (empty()) throw NumericError("spline: evaluated before construction");
  if (x < x_(0) - 1e-12 || x > x_(x_.size() - 1) + 1e-12)
    throw NumericError("spline: query outside table range");
  Eigen::Index lo = 0, hi = x_.size() - 1;
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    (x_(mid) <= x ? lo : hi) = mid;
  }
  return lo;
}

double CubicSpline::at(double x) const {
  const Eigen::Index i = segment(x);
  const double h = x_(i + 1) - x_(i);
  const double a = (x_(i + 1) - x) / h;
  const double b = (x - x_(i)) / h;
  return a * y_(i) + b * y_(i + 1) +
         ((a * a * a - a) * m_(i) + (b * b * b - b) * m_(i + 1)) * h * h / 6.0;
}

double CubicSpline::derivative(double x) const {
  const Eigen::Index i = segment(x);
  const double h = x_(i + 1) - x_(i);
  const double a = (x_(i + 1) - x) / h;
  const double b = (x - x_(i)) / h;
  return (y_(i + 1) - y_(i)) / h +
         ((3.0 * b * b - 1.0) * m_(i + 1) - (3.0 * a * a - 1.0) * m_(i)) * h /
             6.0;
}

double linear_interp(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     double xq) {
  const Eigen::Index n = x.size();
  if (n < 2 || y.size() != n)
    throw std::invalid_argument("interp: need at least two matched samples");
  if (xq < x(0) - 1e-12 || xq > x(n - 1) + 1e-12)
    throw NumericError("interp: query outside table range");
  Eigen::Index lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    (x(mid) <= xq ? lo : hi) = mid;
  }
  const double w = (xq - x(lo)) / (x(lo + 1) - x(lo));
  return (1.0 - w) * y(lo) + w * y(lo + 1);
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text) {
  return fnv1a64(text.data(), text.size());
}

std::string format_full(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace emt
