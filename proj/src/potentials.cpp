#include "fkmc/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fkmc/quadrature.hpp"
#include "fkmc/rng.hpp"

namespace fkmc {

namespace {

double norm2(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

}  // namespace

double FieldRealization::eval(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim)
    throw std::invalid_argument("FieldRealization: dimension mismatch");
  const std::size_t n = values.size();
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = n;
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double d = points[i * dim + j] - x[j];
      d2 += d * d;
    }
    if (d2 < best) {
      best = d2;
      best_i = i;
    }
  }
  if (best_i == n || std::sqrt(best) > max_match_distance)
    throw std::runtime_error(
        "FieldRealization: no stored point within matching distance");
  return values[best_i];
}

ScalarExpr ScalarExpr::zero() { return ScalarExpr(); }

ScalarExpr ScalarExpr::constant(double c) {
  ScalarExpr e;
  e.kind_ = Kind::Constant;
  e.c_ = c;
  return e;
}

ScalarExpr ScalarExpr::harmonic(std::vector<double> omega) {
  if (omega.empty())
    throw std::invalid_argument("harmonic: needs at least one frequency");
  ScalarExpr e;
  e.kind_ = Kind::Harmonic;
  e.omega_ = std::move(omega);
  return e;
}

ScalarExpr ScalarExpr::power_law(int sign, double exponent, double coefficient) {
  if (sign != 1 && sign != -1)
    throw std::invalid_argument("power_law: sign must be +1 or -1");
  if (coefficient < 0.0)
    throw std::invalid_argument("power_law: coefficient must be >= 0");
  ScalarExpr e;
  e.kind_ = Kind::PowerLaw;
  e.sign_ = sign;
  e.exponent_ = exponent;
  e.c_ = coefficient;
  return e;
}

ScalarExpr ScalarExpr::sum(std::vector<ScalarExpr> terms) {
  ScalarExpr e;
  e.kind_ = Kind::Sum;
  e.children_ = std::move(terms);
  return e;
}

ScalarExpr ScalarExpr::truncated(ScalarExpr inner, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("truncated: R must be > 0");
  ScalarExpr e;
  e.kind_ = Kind::Truncated;
  e.radius_ = radius;
  e.children_.push_back(std::move(inner));
  return e;
}

ScalarExpr ScalarExpr::field_sample(std::shared_ptr<const FieldRealization> field) {
  if (!field) throw std::invalid_argument("field_sample: null realization");
  ScalarExpr e;
  e.kind_ = Kind::FieldSample;
  e.field_ = std::move(field);
  return e;
}

double ScalarExpr::operator()(std::span<const double> x) const {
  switch (kind_) {
    case Kind::Zero:
      return 0.0;
    case Kind::Constant:
      return c_;
    case Kind::Harmonic: {
      if (x.size() != omega_.size())
        throw std::invalid_argument("harmonic: dimension mismatch");
      double acc = 0.0;
      for (std::size_t j = 0; j < omega_.size(); ++j)
        acc += omega_[j] * omega_[j] * x[j] * x[j];
      return 0.5 * acc;
    }
    case Kind::PowerLaw:
      return sign_ * c_ * std::pow(std::sqrt(norm2(x)), exponent_);
    case Kind::Sum: {
      double acc = 0.0;
      for (const auto& ch : children_) acc += ch(x);
      return acc;
    }
    case Kind::Truncated:
      // left-continuous Heaviside: Theta(R - |x|) = 0 at |x| = R
      return norm2(x) < radius_ * radius_ ? children_[0](x) : 0.0;
    case Kind::FieldSample:
      return field_->eval(x);
  }
  return 0.0;
}

namespace {

// Declaration screen for property V: estimates the growth exponent of |V2|
// between the shells |x| = r and |x| = 2r along axis directions and random
// rays. Quadratic-or-faster growth with a non-vanishing amplitude cannot be
// sub-quadratic. Probing cannot prove the property, only reject clear
// violations.
double v2_growth_exponent(const ScalarExpr& v2, int dim, double r) {
  std::vector<double> x(dim, 0.0);
  CounterRng rng(0x90be, RngStream::ProbePoints, 1);
  double m1 = 0.0, m2 = 0.0;
  const int n_rays = 8 * dim;
  for (int i = 0; i < n_rays; ++i) {
    double nrm = 0.0;
    if (i < 2 * dim) {
      std::fill(x.begin(), x.end(), 0.0);
      x[i / 2] = (i % 2 == 0) ? 1.0 : -1.0;
      nrm = 1.0;
    } else {
      for (int j = 0; j < dim; ++j) {
        x[j] = rng.normal();
        nrm += x[j] * x[j];
      }
      nrm = std::sqrt(nrm);
      if (nrm == 0.0) continue;
    }
    std::vector<double> p(dim);
    for (int j = 0; j < dim; ++j) p[j] = x[j] / nrm * r;
    m1 = std::max(m1, std::abs(v2(p)));
    for (int j = 0; j < dim; ++j) p[j] *= 2.0;
    m2 = std::max(m2, std::abs(v2(p)));
  }
  if (!(m1 > 0.0) || !(m2 > 0.0)) return 0.0;
  return std::log(m2 / m1) / std::log(2.0);
}

}  // namespace

ScalarPotentialSpec ScalarPotentialSpec::make(ScalarExpr v1, ScalarExpr v2,
                                              bool validate, int dim_hint) {
  ScalarPotentialSpec spec{std::move(v1), std::move(v2)};
  if (validate && !spec.v2.is_zero()) {
    for (double r : {10.0, 100.0, 1000.0}) {
      const double p = v2_growth_exponent(spec.v2, dim_hint, r);
      if (!std::isfinite(p) || p >= 2.0 - 1e-3)
        throw std::invalid_argument(
            "ScalarPotentialSpec: declared V2 grows quadratically or faster "
            "near |x| = " + std::to_string(r) + " (exponent " +
            std::to_string(p) + "); property V requires sub-quadratic V2");
    }
  }
  return spec;
}

ScalarPotentialSpec scalar_zero() {
  return {ScalarExpr::zero(), ScalarExpr::zero()};
}

ScalarPotentialSpec scalar_constant(double c) {
  return {ScalarExpr::constant(c), ScalarExpr::zero()};
}

ScalarPotentialSpec scalar_harmonic(std::vector<double> omega) {
  return {ScalarExpr::harmonic(std::move(omega)), ScalarExpr::zero()};
}

ScalarPotentialSpec truncate(const ScalarPotentialSpec& spec, double R) {
  if (!(R > 0.0)) throw std::invalid_argument("truncate: R must be > 0");
  ScalarPotentialSpec out;
  out.v1 = spec.v1;
  out.v2 = spec.v2.is_zero() ? spec.v2 : ScalarExpr::truncated(spec.v2, R);
  return out;
}

SubquadraticReport check_subquadratic(const ScalarPotentialSpec& spec,
                                      double eps, const Box& sample_box,
                                      int n_probe) {
  if (!(eps > 0.0)) throw std::invalid_argument("check_subquadratic: eps <= 0");
  if (sample_box.degenerate())
    throw std::invalid_argument("check_subquadratic: degenerate box");
  const int dim = static_cast<int>(sample_box.lo.size());
  if (n_probe < 2) throw std::invalid_argument("check_subquadratic: n_probe < 2");

  SubquadraticReport report;
  report.v_eps_estimate = -std::numeric_limits<double>::infinity();
  std::vector<double> x(dim, 0.0);

  auto visit = [&](std::span<const double> p) {
    const double v2 = spec.v2_at(p);
    const double g = std::abs(v2) - eps * norm2(p);
    if (!std::isfinite(g)) {
      report.v_eps_estimate = std::numeric_limits<double>::infinity();
      report.argmax.assign(p.begin(), p.end());
      return;
    }
    if (g > report.v_eps_estimate) {
      report.v_eps_estimate = g;
      report.argmax.assign(p.begin(), p.end());
    }
  };

  if (dim == 1) {
    for (int i = 0; i < n_probe; ++i) {
      x[0] = sample_box.lo[0] +
             (sample_box.hi[0] - sample_box.lo[0]) * i / (n_probe - 1.0);
      visit(x);
    }
  } else {
    // per-axis sweeps through the centre, then pseudo-random interior fill
    const int per_axis = std::max(2, n_probe / (2 * dim));
    for (int j = 0; j < dim; ++j) {
      std::fill(x.begin(), x.end(), 0.0);
      for (int i = 0; i < per_axis; ++i) {
        x[j] = sample_box.lo[j] +
               (sample_box.hi[j] - sample_box.lo[j]) * i / (per_axis - 1.0);
        visit(x);
      }
    }
    CounterRng rng(0x5cafe, RngStream::ProbePoints, 0);
    for (int i = 0; i < n_probe; ++i) {
      for (int j = 0; j < dim; ++j)
        x[j] = sample_box.lo[j] +
               (sample_box.hi[j] - sample_box.lo[j]) * rng.uniform();
      visit(x);
    }
  }

  if (!std::isfinite(report.v_eps_estimate)) {
    report.holds = false;
    report.boundary_attained = false;
    return report;
  }
  // a maximizer hugging the box edge means the probe max is still growing
  // with the box, i.e. v_eps has not converged
  report.boundary_attained = false;
  for (int j = 0; j < dim; ++j) {
    const double w = sample_box.hi[j] - sample_box.lo[j];
    if (w <= 0.0) continue;
    const double rel_lo = (report.argmax[j] - sample_box.lo[j]) / w;
    if (rel_lo <= 0.05 || rel_lo >= 0.95) {
      report.boundary_attained = true;
      break;
    }
  }
  // a boundary maximizer with a non-positive statistic is harmless
  report.holds = !(report.boundary_attained && report.v_eps_estimate > 0.0);
  return report;
}

VectorPotentialSpec VectorPotentialSpec::zero() { return VectorPotentialSpec(); }

VectorPotentialSpec VectorPotentialSpec::custom(int dim, AFn a, DivFn divergence) {
  VectorPotentialSpec spec;
  spec.kind_ = Kind::Custom;
  spec.dim_ = dim;
  spec.a_fn_ = std::move(a);
  spec.div_fn_ = std::move(divergence);
  spec.have_div_ = true;
  return spec;
}

VectorPotentialSpec VectorPotentialSpec::custom_no_divergence(int dim, AFn a) {
  VectorPotentialSpec spec;
  spec.kind_ = Kind::Custom;
  spec.dim_ = dim;
  spec.a_fn_ = std::move(a);
  spec.have_div_ = false;
  return spec;
}

void VectorPotentialSpec::eval(std::span<const double> x,
                               std::span<double> out) const {
  switch (kind_) {
    case Kind::Zero:
      std::fill(out.begin(), out.end(), 0.0);
      return;
    case Kind::ConstantField: {
      const int d = dim_;
      if (static_cast<int>(x.size()) != d)
        throw std::invalid_argument("VectorPotentialSpec: dimension mismatch");
      for (int k = 0; k < d; ++k) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += x[j] * b_[static_cast<std::size_t>(j) * d + k];
        out[k] = 0.5 * acc;
      }
      return;
    }
    case Kind::Custom:
      a_fn_(x, out);
      return;
  }
}

double VectorPotentialSpec::divergence(std::span<const double> x) const {
  switch (kind_) {
    case Kind::Zero:
    case Kind::ConstantField:
      return 0.0;
    case Kind::Custom:
      if (!have_div_)
        throw std::logic_error(
            "VectorPotentialSpec: custom A has no declared divergence");
      return div_fn_(x);
  }
  return 0.0;
}

bool VectorPotentialSpec::has_divergence() const {
  return kind_ != Kind::Custom || have_div_;
}

VectorPotentialSpec poincare_gauge(const std::vector<double>& b, int dim) {
  if (dim < 1 || b.size() != static_cast<std::size_t>(dim) * dim)
    throw std::invalid_argument("poincare_gauge: B must be dim x dim");
  for (int j = 0; j < dim; ++j)
    for (int k = 0; k < dim; ++k)
      if (b[static_cast<std::size_t>(j) * dim + k] !=
          -b[static_cast<std::size_t>(k) * dim + j])
        throw std::invalid_argument("poincare_gauge: B must be exactly skew-symmetric");
  VectorPotentialSpec spec;
  spec.kind_ = VectorPotentialSpec::Kind::ConstantField;
  spec.dim_ = dim;
  spec.b_ = b;
  return spec;
}

double kato_kappa(const std::function<double(std::span<const double>)>& f,
                  double t, int n_s, int n_mc,
                  std::span<const double> probe_points, int dim,
                  std::uint64_t seed) {
  if (!(t > 0.0)) throw std::invalid_argument("kato_kappa: t must be > 0");
  if (n_s < 1 || n_mc < 1) throw std::invalid_argument("kato_kappa: n_s, n_mc >= 1");
  if (probe_points.empty() || probe_points.size() % dim != 0)
    throw std::invalid_argument("kato_kappa: probe set empty or misshapen");
  const std::size_t n_probe = probe_points.size() / dim;

  // e^{-|xi|^2} = pi^{d/2} times the N(0, 1/2 I) density; shared draws
  // across every (probe, s) pair.
  CounterRng rng(seed, RngStream::KatoXi, 0);
  std::vector<double> xi(static_cast<std::size_t>(n_mc) * dim);
  const double inv_sqrt2 = 0.70710678118654752440;
  for (auto& v : xi) v = inv_sqrt2 * rng.normal();
  const double gauss_mass = std::pow(M_PI, 0.5 * dim);

  std::vector<double> y(dim);
  double best = 0.0;
  for (std::size_t p = 0; p < n_probe; ++p) {
    const double* x = probe_points.data() + p * dim;
    auto g = [&](double s) {
      const double rs = std::sqrt(s);
      double acc = 0.0;
      for (int i = 0; i < n_mc; ++i) {
        for (int j = 0; j < dim; ++j)
          y[j] = x[j] + rs * xi[static_cast<std::size_t>(i) * dim + j];
        const double fv = f(y);
        if (!std::isfinite(fv))
          throw std::runtime_error("kato_kappa: non-finite f value");
        acc += std::abs(fv);
      }
      return gauss_mass * acc / n_mc;
    };
    const double val = trapezoid(g, 0.0, t, n_s);
    best = std::max(best, val);
  }
  return best;
}

double upsilon(double xi, int d) {
  if (!(xi >= 0.0) || xi >= 1.0)
    throw std::invalid_argument("upsilon: xi must lie in [0, 1)");
  if (d < 1) throw std::invalid_argument("upsilon: d must be >= 1");
  if (xi == 0.0) return 1.0;
  auto integrand = [&](double sigma) {
    return std::pow(1.0 - 4.0 * xi * sigma * (1.0 - sigma), -0.5 * d);
  };
  return adaptive_simpson(integrand, 0.0, 1.0, 1e-8);
}

}  // namespace fkmc
