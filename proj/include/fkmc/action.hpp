#pragma once

#include <complex>
#include <functional>

#include "fkmc/bridge.hpp"
#include "fkmc/potentials.hpp"

namespace fkmc {

/// Euclidean action of one discretized path, split into its three summands:
///   value = i * ito + (i/2) * int div A  +  int V.
/// The identity value = ito_part + divergence_part + scalar_part holds
/// exactly, by construction.
struct ActionValue {
  std::complex<double> value{0.0, 0.0};
  std::complex<double> ito_part{0.0, 0.0};
  std::complex<double> divergence_part{0.0, 0.0};
  double scalar_part = 0.0;
};

/// Left-endpoint Riemann-Ito sum  sum_k A(b(s_k)) . (b(s_{k+1}) - b(s_k)).
double ito_line_integral(const BridgePath& path, const VectorPotentialSpec& a);

/// Midpoint companion  sum_k A((b(s_k)+b(s_{k+1}))/2) . (b(s_{k+1}) - b(s_k));
/// cross-check only, the canonical action uses the Ito form plus the
/// explicit divergence term.
double stratonovich_line_integral(const BridgePath& path,
                                  const VectorPotentialSpec& a);

/// Trapezoid rule over the path grid for  int_0^t f(b(s)) ds.
double time_integral(const BridgePath& path,
                     const std::function<double(std::span<const double>)>& f);
double time_integral(const BridgePath& path, const ScalarExpr& f);
double time_integral(const BridgePath& path, const ScalarPotentialSpec& v);

/// Full action; A must either be divergence-free by construction or carry a
/// declared analytic divergence (numerical differentiation is never used).
ActionValue action(const BridgePath& path, const VectorPotentialSpec& a,
                   const ScalarPotentialSpec& v);

}  // namespace fkmc
