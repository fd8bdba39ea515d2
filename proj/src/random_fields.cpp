#include "fkmc/random_fields.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fkmc/parallel.hpp"
#include "fkmc/rng.hpp"
#include "fkmc/stats.hpp"

namespace fkmc {

namespace {

constexpr double kOverflowLimit = 1e300;
constexpr std::size_t kMaxPoints = 4096;

double dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// Covariance matrix over a point set and its Cholesky factor with the
/// jitter ladder {0, 1e-14, 1e-12, 1e-10} * C(0).
Eigen::MatrixXd covariance_matrix(std::span<const double> points, int dim,
                                  const GaussianFieldSpec& spec) {
  const std::size_t n = points.size() / dim;
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double c = spec.covariance_r(
          dist(points.subspan(i * dim, dim), points.subspan(j * dim, dim)));
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
    }
  }
  return m;
}

Eigen::MatrixXd cholesky_with_jitter(Eigen::MatrixXd m, double c0) {
  const double jitters[] = {0.0, 1e-14, 1e-12, 1e-10};
  double applied = 0.0;
  for (double j : jitters) {
    const double add = j * c0 - applied;
    if (add > 0.0) {
      m.diagonal().array() += add;
      applied = j * c0;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw std::runtime_error(
      "sample_on_points: covariance factorization failed at maximum jitter "
      "1e-10 C(0); the covariance is not positive semi-definite");
}

}  // namespace

GaussianFieldSpec GaussianFieldSpec::squared_exponential(double variance,
                                                         double length) {
  if (variance < 0.0)
    throw std::invalid_argument("GaussianFieldSpec: variance must be >= 0");
  if (!(length > 0.0))
    throw std::invalid_argument("GaussianFieldSpec: length must be > 0");
  GaussianFieldSpec s;
  s.kind = Kind::SquaredExponential;
  s.variance = variance;
  s.length = length;
  return s;
}

GaussianFieldSpec GaussianFieldSpec::tabulated_radial(std::vector<double> r,
                                                      std::vector<double> c) {
  if (r.size() != c.size() || r.size() < 2)
    throw std::invalid_argument("tabulated_radial: need matching tables, >= 2 rows");
  if (r.front() != 0.0)
    throw std::invalid_argument("tabulated_radial: table must start at r = 0");
  for (std::size_t i = 1; i < r.size(); ++i)
    if (!(r[i] > r[i - 1]))
      throw std::invalid_argument("tabulated_radial: radii must be increasing");
  if (c.front() < 0.0)
    throw std::invalid_argument("tabulated_radial: C(0) must be >= 0");
  GaussianFieldSpec s;
  s.kind = Kind::TabulatedRadial;
  s.variance = c.front();
  s.r_table = std::move(r);
  s.c_table = std::move(c);
  return s;
}

double GaussianFieldSpec::covariance_r(double r) const {
  switch (kind) {
    case Kind::SquaredExponential:
      return variance * std::exp(-r * r / (2.0 * length * length));
    case Kind::TabulatedRadial: {
      if (r >= r_table.back()) return c_table.back();
      const auto it = std::upper_bound(r_table.begin(), r_table.end(), r);
      const std::size_t hi = static_cast<std::size_t>(it - r_table.begin());
      if (hi == 0) return c_table.front();
      const double w = (r - r_table[hi - 1]) / (r_table[hi] - r_table[hi - 1]);
      return c_table[hi - 1] + w * (c_table[hi] - c_table[hi - 1]);
    }
  }
  return 0.0;
}

double GaussianFieldSpec::covariance(std::span<const double> dx) const {
  double acc = 0.0;
  for (double v : dx) acc += v * v;
  return covariance_r(std::sqrt(acc));
}

double GaussianFieldSpec::c0() const { return variance; }

std::vector<double> sample_on_points(std::span<const double> points, int dim,
                                     const GaussianFieldSpec& spec,
                                     std::uint64_t seed) {
  if (dim < 1 || points.empty() || points.size() % dim != 0)
    throw std::invalid_argument("sample_on_points: misshapen point list");
  const std::size_t n = points.size() / dim;
  if (n > kMaxPoints)
    throw std::invalid_argument("sample_on_points: more than 4096 points");
  if (spec.c0() == 0.0) return std::vector<double>(n, 0.0);

  const Eigen::MatrixXd l =
      cholesky_with_jitter(covariance_matrix(points, dim, spec), spec.c0());
  CounterRng rng(seed, RngStream::FieldAtPathNodes, 0);
  Eigen::VectorXd xi(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = rng.normal();
  Eigen::VectorXd z = l * xi;
  return {z.data(), z.data() + z.size()};
}

double double_time_covariance(const BridgePath& path,
                              const GaussianFieldSpec& spec) {
  const int n = path.grid.n_steps;
  const double dt = path.grid.dt();
  double acc = 0.0;
  // diagonal plus twice the upper triangle: symmetric under s <-> s' by
  // construction
  for (int k = 0; k <= n; ++k) {
    const double wk = ((k == 0 || k == n) ? 0.5 : 1.0) * dt;
    acc += wk * wk * spec.c0();
    for (int l = k + 1; l <= n; ++l) {
      const double wl = ((l == 0 || l == n) ? 0.5 : 1.0) * dt;
      acc += 2.0 * wk * wl *
             spec.covariance_r(dist(path.node(k), path.node(l)));
    }
  }
  return acc;
}

GaussianIdentityReport gaussian_identity_residual(const BridgePath& path,
                                                  const GaussianFieldSpec& spec,
                                                  std::int64_t n_field_samples,
                                                  std::uint64_t seed,
                                                  int workers) {
  if (n_field_samples < 2)
    throw std::invalid_argument("gaussian_identity: n_field_samples >= 2");
  const int n = path.grid.n_steps;
  const std::size_t n_nodes = static_cast<std::size_t>(n) + 1;
  const double dt = path.grid.dt();

  GaussianIdentityReport rep;
  rep.n_field_samples = n_field_samples;
  rep.closed_form = std::exp(0.5 * double_time_covariance(path, spec));

  if (spec.c0() == 0.0) {
    rep.mc_value = 1.0;
    rep.mc_std_error = 0.0;
    rep.residual = std::abs(rep.mc_value - rep.closed_form) / rep.closed_form;
    return rep;
  }

  const Eigen::MatrixXd l = cholesky_with_jitter(
      covariance_matrix({path.positions.data(), n_nodes * path.dim}, path.dim,
                        spec),
      spec.c0());
  Eigen::VectorXd w(static_cast<Eigen::Index>(n_nodes));
  for (std::size_t k = 0; k < n_nodes; ++k)
    w(static_cast<Eigen::Index>(k)) =
        ((k == 0 || k == n_nodes - 1) ? 0.5 : 1.0) * dt;
  // time_integral(path, V) for a realization V = L xi collapses to
  // (L^T w) . xi
  const Eigen::VectorXd lw = l.transpose() * w;

  struct State {
    Moments mom;
    Eigen::VectorXd xi;
  };
  State init;
  init.xi.resize(lw.size());
  State res = chunked_reduce(
      n_field_samples, workers, init,
      [&](State& st, std::int64_t i) {
        CounterRng rng(seed, RngStream::FieldAtPathNodes,
                       static_cast<std::uint64_t>(i));
        for (Eigen::Index k = 0; k < st.xi.size(); ++k) st.xi(k) = rng.normal();
        const double integral = lw.dot(st.xi);
        const double val = std::exp(integral);
        if (!std::isfinite(val) || val > kOverflowLimit)
          throw PathOverflowError(seed, i);
        st.mom.add(val);
      },
      [](State& acc, State& st) { acc.mom.merge(st.mom); });

  rep.mc_value = res.mom.mean();
  rep.mc_std_error = res.mom.standard_error();
  rep.residual = std::abs(rep.mc_value - rep.closed_form) / rep.closed_form;
  return rep;
}

namespace {

/// Shared engine for the direct and two-stage averaged-kernel estimates.
template <class Summand>
KernelEstimate averaged_kernel_impl(std::span<const double> x,
                                    std::span<const double> y, double t,
                                    const VectorPotentialSpec& a,
                                    const McParams& mc, Summand summand) {
  if (x.size() != y.size() || x.empty())
    throw std::invalid_argument("averaged_kernel: x/y dimension mismatch");
  if (!(t > 0.0)) throw std::invalid_argument("averaged_kernel: t must be > 0");
  if (!a.has_divergence())
    throw std::logic_error("averaged_kernel: A needs a declared divergence");
  if (mc.n_samples < 2)
    throw std::invalid_argument("averaged_kernel: n_samples >= 2");

  const double prefactor = free_kernel_prefactor(x, y, t);
  const TimeGrid grid(t, mc.n_steps);

  struct Chunk {
    ComplexMoments mom;
    std::vector<double> magnitudes;
    BridgePath buf;
  };
  Chunk init{{}, {}, BridgePath(x, y, grid)};
  Chunk res = chunked_reduce(
      mc.n_samples, mc.workers, init,
      [&](Chunk& st, std::int64_t i) {
        CounterRng rng(mc.seed, RngStream::BridgePath,
                       static_cast<std::uint64_t>(i));
        sample_bridge_into(st.buf, rng);
        const std::complex<double> z = prefactor * summand(st.buf, i);
        st.mom.add(z);
        if (mc.tail_diagnostics) st.magnitudes.push_back(std::abs(z));
      },
      [](Chunk& acc, Chunk& st) {
        acc.mom.merge(st.mom);
        acc.magnitudes.insert(acc.magnitudes.end(), st.magnitudes.begin(),
                              st.magnitudes.end());
      });

  KernelEstimate est;
  est.mean = res.mom.mean();
  est.std_error = res.mom.standard_error();
  est.n_samples = mc.n_samples;
  est.n_steps = mc.n_steps;
  est.t = t;
  est.x.assign(x.begin(), x.end());
  est.y.assign(y.begin(), y.end());
  est.prefactor = prefactor;
  if (mc.tail_diagnostics && !res.magnitudes.empty()) {
    std::sort(res.magnitudes.begin(), res.magnitudes.end(), std::greater<>());
    double total = 0.0;
    for (double m : res.magnitudes) total += m;
    const std::size_t top = std::max<std::size_t>(
        1,
        static_cast<std::size_t>(std::ceil(0.001 * res.magnitudes.size())));
    double top_mass = 0.0;
    for (std::size_t i = 0; i < top; ++i) top_mass += res.magnitudes[i];
    est.tail_top_mass_fraction = total > 0.0 ? top_mass / total : 0.0;
    est.tail_flagged = est.tail_top_mass_fraction > 0.5;
  }
  return est;
}

std::complex<double> magnetic_phase_factor(const BridgePath& path,
                                           const VectorPotentialSpec& a) {
  if (a.is_zero()) return {1.0, 0.0};
  const double imag =
      ito_line_integral(path, a) +
      0.5 * time_integral(path, [&](std::span<const double> p) {
        return a.divergence(p);
      });
  return {std::cos(imag), -std::sin(imag)};
}

}  // namespace

KernelEstimate averaged_kernel(std::span<const double> x,
                               std::span<const double> y, double t,
                               const VectorPotentialSpec& a,
                               const GaussianFieldSpec& spec,
                               const McParams& mc) {
  return averaged_kernel_impl(
      x, y, t, a, mc,
      [&](const BridgePath& path, std::int64_t i) -> std::complex<double> {
        const double gauss = 0.5 * double_time_covariance(path, spec);
        const double mag = std::exp(gauss);
        if (!std::isfinite(mag) || mag > kOverflowLimit)
          throw PathOverflowError(mc.seed, i);
        return mag * magnetic_phase_factor(path, a);
      });
}

KernelEstimate averaged_kernel_two_stage(std::span<const double> x,
                                         std::span<const double> y, double t,
                                         const VectorPotentialSpec& a,
                                         const GaussianFieldSpec& spec,
                                         const McParams& mc,
                                         std::int64_t n_field_samples) {
  if (n_field_samples < 1)
    throw std::invalid_argument("averaged_kernel_two_stage: n_field_samples >= 1");
  return averaged_kernel_impl(
      x, y, t, a, mc,
      [&](const BridgePath& path, std::int64_t i) -> std::complex<double> {
        const std::size_t n_nodes =
            static_cast<std::size_t>(path.grid.n_steps) + 1;
        const double dt = path.grid.dt();
        double inner = 1.0;
        if (spec.c0() > 0.0) {
          const Eigen::MatrixXd l = cholesky_with_jitter(
              covariance_matrix({path.positions.data(), n_nodes * path.dim},
                                path.dim, spec),
              spec.c0());
          Eigen::VectorXd w(static_cast<Eigen::Index>(n_nodes));
          for (std::size_t k = 0; k < n_nodes; ++k)
            w(static_cast<Eigen::Index>(k)) =
                ((k == 0 || k == n_nodes - 1) ? 0.5 : 1.0) * dt;
          const Eigen::VectorXd lw = l.transpose() * w;
          CounterRng rng(mc.seed, RngStream::FieldAtPathNodes,
                         static_cast<std::uint64_t>(i));
          double acc = 0.0;
          for (std::int64_t s = 0; s < n_field_samples; ++s) {
            double integral = 0.0;
            for (Eigen::Index k = 0; k < lw.size(); ++k)
              integral += lw(k) * rng.normal();
            const double val = std::exp(integral);
            if (!std::isfinite(val) || val > kOverflowLimit)
              throw PathOverflowError(mc.seed, i);
            acc += val;
          }
          inner = acc / static_cast<double>(n_field_samples);
        }
        return inner * magnetic_phase_factor(path, a);
      });
}

double l_t(const GaussianFieldSpec& spec, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("l_t: t must be > 0");
  return std::exp(0.5 * t * t * spec.c0());
}

AveragedBoundsReport averaged_bound_checks(std::span<const double> x,
                                           std::span<const double> y, double t,
                                           const GaussianFieldSpec& spec,
                                           const VectorPotentialSpec& a,
                                           const McParams& mc) {
  AveragedBoundsReport rep;
  rep.estimate = averaged_kernel(x, y, t, a, spec, mc);

  const std::vector<double> origin(x.size(), 0.0);
  rep.diag_a0 =
      averaged_kernel(origin, origin, t, VectorPotentialSpec::zero(), spec, mc);

  const double est_abs = std::abs(rep.estimate.mean);
  rep.free_bound_rhs = l_t(spec, t) * free_kernel_prefactor(x, y, t);
  rep.free_bound_pass = est_abs <= rep.free_bound_rhs + 3.0 * rep.estimate.std_error;

  double d2 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - y[j];
    d2 += d * d;
  }
  const double gauss = std::exp(-d2 / (2.0 * t));
  rep.sharp_rhs = gauss * rep.diag_a0.mean.real();
  rep.sharp_rhs_std_error = gauss * rep.diag_a0.std_error;
  const double combined =
      std::sqrt(rep.estimate.std_error * rep.estimate.std_error +
                rep.sharp_rhs_std_error * rep.sharp_rhs_std_error);
  rep.sharp_pass = est_abs <= rep.sharp_rhs + 3.0 * combined;
  return rep;
}

}  // namespace fkmc
