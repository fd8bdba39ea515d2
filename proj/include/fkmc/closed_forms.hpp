#pragma once

#include <cmath>
#include <span>

namespace fkmc {

/// Free heat kernel e^{-|x-y|^2/(2t)} / (2 pi t)^{d/2} for H = -Laplacian/2.
inline double free_heat_kernel(std::span<const double> x,
                               std::span<const double> y, double t) {
  double d2 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - y[j];
    d2 += d * d;
  }
  const double dim = static_cast<double>(x.size());
  return std::exp(-d2 / (2.0 * t)) /
         std::pow(2.0 * 3.14159265358979323846 * t, 0.5 * dim);
}

/// Mehler kernel of H = -d^2/dx^2 / 2 + omega^2 x^2 / 2 in one dimension.
inline double mehler_kernel(double x, double y, double t, double omega) {
  const double s = std::sinh(omega * t);
  const double c = std::cosh(omega * t);
  return std::sqrt(omega / (2.0 * 3.14159265358979323846 * s)) *
         std::exp(-omega * ((x * x + y * y) * c - 2.0 * x * y) / (2.0 * s));
}

/// Diagonal of the two-dimensional constant-field kernel for
/// H = 1/2 (i grad + A)^2 with field strength b: b / (4 pi sinh(b t / 2)).
inline double landau_diagonal(double b, double t) {
  if (b == 0.0) return 1.0 / (2.0 * 3.14159265358979323846 * t);
  return b / (4.0 * 3.14159265358979323846 * std::sinh(0.5 * b * t));
}

}  // namespace fkmc
