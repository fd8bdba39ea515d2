#include "fkmc/action.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fkmc {

namespace {

void check_finite(double v, const char* what, int node) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string(what) +
                             ": non-finite value at path node " +
                             std::to_string(node));
}

}  // namespace

double ito_line_integral(const BridgePath& path, const VectorPotentialSpec& a) {
  if (a.is_zero()) return 0.0;
  const int n = path.grid.n_steps;
  const int d = path.dim;
  std::vector<double> av(d);
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto cur = path.node(k);
    const auto nxt = path.node(k + 1);
    a.eval(cur, av);
    double term = 0.0;
    for (int j = 0; j < d; ++j) {
      check_finite(av[j], "ito_line_integral: A", k);
      term += av[j] * (nxt[j] - cur[j]);
    }
    acc += term;
  }
  return acc;
}

double stratonovich_line_integral(const BridgePath& path,
                                  const VectorPotentialSpec& a) {
  if (a.is_zero()) return 0.0;
  const int n = path.grid.n_steps;
  const int d = path.dim;
  std::vector<double> av(d), mid(d);
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto cur = path.node(k);
    const auto nxt = path.node(k + 1);
    for (int j = 0; j < d; ++j) mid[j] = 0.5 * (cur[j] + nxt[j]);
    a.eval(mid, av);
    double term = 0.0;
    for (int j = 0; j < d; ++j) {
      check_finite(av[j], "stratonovich_line_integral: A", k);
      term += av[j] * (nxt[j] - cur[j]);
    }
    acc += term;
  }
  return acc;
}

namespace {

template <class F>
double trapezoid_over_path(const BridgePath& path, F&& f, const char* what) {
  const int n = path.grid.n_steps;
  double v = f(path.node(0));
  check_finite(v, what, 0);
  double acc = 0.5 * v;
  for (int k = 1; k < n; ++k) {
    v = f(path.node(k));
    check_finite(v, what, k);
    acc += v;
  }
  v = f(path.node(n));
  check_finite(v, what, n);
  acc += 0.5 * v;
  return acc * path.grid.dt();
}

}  // namespace

double time_integral(const BridgePath& path,
                     const std::function<double(std::span<const double>)>& f) {
  return trapezoid_over_path(path, f, "time_integral: f");
}

double time_integral(const BridgePath& path, const ScalarExpr& f) {
  return trapezoid_over_path(path, [&](std::span<const double> x) { return f(x); },
                             "time_integral: f");
}

double time_integral(const BridgePath& path, const ScalarPotentialSpec& v) {
  return trapezoid_over_path(path, [&](std::span<const double> x) { return v(x); },
                             "time_integral: V");
}

ActionValue action(const BridgePath& path, const VectorPotentialSpec& a,
                   const ScalarPotentialSpec& v) {
  if (!a.has_divergence())
    throw std::logic_error(
        "action: vector potential must supply a divergence (analytic or "
        "declared zero)");
  ActionValue out;
  if (!a.is_zero()) {
    out.ito_part = std::complex<double>(0.0, ito_line_integral(path, a));
    const double div_int = trapezoid_over_path(
        path, [&](std::span<const double> x) { return a.divergence(x); },
        "action: div A");
    out.divergence_part = std::complex<double>(0.0, 0.5 * div_int);
  }
  out.scalar_part = time_integral(path, v);
  out.value = out.ito_part + out.divergence_part +
              std::complex<double>(out.scalar_part, 0.0);
  return out;
}

}  // namespace fkmc
