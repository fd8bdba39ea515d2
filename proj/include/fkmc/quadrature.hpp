#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace fkmc {

/// Composite trapezoid rule with n subintervals on [a, b].
template <class F>
double trapezoid(F f, double a, double b, int n) {
  if (n < 1) throw std::invalid_argument("trapezoid: n < 1");
  const double h = (b - a) / n;
  double acc = 0.5 * (f(a) + f(b));
  for (int k = 1; k < n; ++k) acc += f(a + h * k);
  return acc * h;
}

/// Composite midpoint rule with n subintervals on [a, b].
template <class F>
double midpoint(F f, double a, double b, std::int64_t n) {
  if (n < 1) throw std::invalid_argument("midpoint: n < 1");
  const double h = (b - a) / static_cast<double>(n);
  double acc = 0.0;
  for (std::int64_t k = 0; k < n; ++k) acc += f(a + h * (static_cast<double>(k) + 0.5));
  return acc * h;
}

namespace detail {

template <class F>
double adaptive_simpson_rec(F& f, double a, double b, double fa, double fm,
                            double fb, double whole, double rel_tol,
                            double abs_tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0) return left + right + delta / 15.0;
  const double scale = std::abs(left + right);
  if (std::abs(delta) <= 15.0 * (abs_tol + rel_tol * scale))
    return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, rel_tol, abs_tol * 0.5, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, rel_tol, abs_tol * 0.5, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature on [a, b] to the requested relative tolerance.
template <class F>
double adaptive_simpson(F f, double a, double b, double rel_tol,
                        double abs_tol = 0.0, int max_depth = 48) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol,
                                      abs_tol, max_depth);
}

}  // namespace fkmc
