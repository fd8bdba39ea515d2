#include "fkmc/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fkmc/parallel.hpp"
#include "fkmc/rng.hpp"
#include "fkmc/stats.hpp"

namespace fkmc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kOverflowLimit = 1e300;

double dist2(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - y[j];
    acc += d * d;
  }
  return acc;
}

double norm2(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

/// e^{-z} for complex z = re + i*im without intermediate overflow checks;
/// callers guard the magnitude.
std::complex<double> exp_neg(std::complex<double> z) {
  const double mag = std::exp(-z.real());
  return {mag * std::cos(z.imag()), -mag * std::sin(z.imag())};
}

void check_dims(std::span<const double> x, std::span<const double> y,
                const VectorPotentialSpec& a) {
  if (x.size() != y.size() || x.empty())
    throw std::invalid_argument("kernel: x/y dimension mismatch");
  if (!a.is_zero() && a.dim() != 0 &&
      a.dim() != static_cast<int>(x.size()))
    throw std::invalid_argument("kernel: vector potential dimension mismatch");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t s = seed ^ (0xA24BAED4963EE407ULL * (salt + 1));
  return detail::splitmix64(s);
}

/// Runs `per_path(state, path, index)` over n_samples bridge realizations of
/// the (x, y, t) bridge with counter-based seeding; chunk states merge in
/// fixed order via `merge`.
template <class UState, class PerPath, class Merge>
UState run_paths(std::span<const double> x, std::span<const double> y,
                 double t, const McParams& mc, const UState& init,
                 PerPath per_path, Merge merge_u) {
  if (mc.n_samples < 2)
    throw std::invalid_argument("estimate: n_samples must be >= 2");
  const TimeGrid grid(t, mc.n_steps);
  struct Chunk {
    UState u;
    BridgePath buf;
  };
  Chunk init_chunk{init, BridgePath(x, y, grid)};
  Chunk out = chunked_reduce(
      mc.n_samples, mc.workers, init_chunk,
      [&](Chunk& st, std::int64_t i) {
        CounterRng rng(mc.seed, RngStream::BridgePath,
                       static_cast<std::uint64_t>(i));
        sample_bridge_into(st.buf, rng);
        per_path(st.u, st.buf, i);
      },
      [&](Chunk& acc, Chunk& st) { merge_u(acc.u, st.u); });
  return out.u;
}

struct MomentsWithTail {
  ComplexMoments mom;
  std::vector<double> magnitudes;

  void merge(MomentsWithTail& o) {
    mom.merge(o.mom);
    magnitudes.insert(magnitudes.end(), o.magnitudes.begin(),
                      o.magnitudes.end());
  }
};

void fill_tail_diagnostics(KernelEstimate& est,
                           std::vector<double>& magnitudes) {
  if (magnitudes.empty()) return;
  std::sort(magnitudes.begin(), magnitudes.end(), std::greater<>());
  const double total =
      std::accumulate(magnitudes.begin(), magnitudes.end(), 0.0);
  const std::size_t top = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(0.001 * magnitudes.size())));
  const double top_mass =
      std::accumulate(magnitudes.begin(), magnitudes.begin() + top, 0.0);
  est.tail_top_mass_fraction = total > 0.0 ? top_mass / total : 0.0;
  est.tail_flagged = est.tail_top_mass_fraction > 0.5;
}

/// Right-endpoint Ito sum of the time-reversed path, computed in place:
/// reversing b and summing left endpoints equals -sum_k A(b_k)(b_k - b_{k-1}).
double ito_line_integral_reversed(const BridgePath& path,
                                  const VectorPotentialSpec& a,
                                  std::vector<double>& av) {
  if (a.is_zero()) return 0.0;
  const int n = path.grid.n_steps;
  const int d = path.dim;
  double acc = 0.0;
  for (int k = n; k >= 1; --k) {
    const auto cur = path.node(k);
    const auto prv = path.node(k - 1);
    a.eval(cur, av);
    double term = 0.0;
    for (int j = 0; j < d; ++j) term += av[j] * (prv[j] - cur[j]);
    acc += term;
  }
  return acc;
}

}  // namespace

double free_kernel_prefactor(std::span<const double> x,
                             std::span<const double> y, double t) {
  const double d = static_cast<double>(x.size());
  return std::exp(-dist2(x, y) / (2.0 * t)) / std::pow(2.0 * kPi * t, 0.5 * d);
}

KernelEstimate estimate_kernel(std::span<const double> x,
                               std::span<const double> y, double t,
                               const VectorPotentialSpec& a,
                               const ScalarPotentialSpec& v,
                               const McParams& mc) {
  check_dims(x, y, a);
  if (!(t > 0.0)) throw std::invalid_argument("estimate_kernel: t must be > 0");
  const double prefactor = free_kernel_prefactor(x, y, t);

  MomentsWithTail init;
  if (mc.tail_diagnostics)
    init.magnitudes.reserve(static_cast<std::size_t>(
        std::min<std::int64_t>(mc.n_samples, kReduceChunk)));
  auto res = run_paths(
      x, y, t, mc, init,
      [&](MomentsWithTail& st, const BridgePath& path, std::int64_t i) {
        const ActionValue s = action(path, a, v);
        const double mag = std::exp(-s.scalar_part);
        if (!std::isfinite(mag) || mag > kOverflowLimit)
          throw PathOverflowError(mc.seed, i);
        const std::complex<double> z = prefactor * exp_neg(s.value);
        st.mom.add(z);
        if (mc.tail_diagnostics) st.magnitudes.push_back(std::abs(z));
      },
      [](MomentsWithTail& acc, MomentsWithTail& st) { acc.merge(st); });

  KernelEstimate est;
  est.mean = res.mom.mean();
  est.std_error = res.mom.standard_error();
  est.n_samples = mc.n_samples;
  est.n_steps = mc.n_steps;
  est.t = t;
  est.x.assign(x.begin(), x.end());
  est.y.assign(y.begin(), y.end());
  est.prefactor = prefactor;
  if (mc.tail_diagnostics) fill_tail_diagnostics(est, res.magnitudes);
  return est;
}

HermiticityReport hermiticity_residual(std::span<const double> x,
                                       std::span<const double> y, double t,
                                       const VectorPotentialSpec& a,
                                       const ScalarPotentialSpec& v,
                                       const McParams& mc) {
  check_dims(x, y, a);
  if (!(t > 0.0)) throw std::invalid_argument("hermiticity: t must be > 0");
  if (!a.has_divergence())
    throw std::logic_error("hermiticity: A needs a declared divergence");
  const double prefactor = free_kernel_prefactor(x, y, t);

  struct State {
    ComplexMoments fwd, rev, diff;
    std::vector<double> av;
    void merge(State& o) {
      fwd.merge(o.fwd);
      rev.merge(o.rev);
      diff.merge(o.diff);
    }
  };
  State init;
  init.av.resize(x.size());

  auto res = run_paths(
      x, y, t, mc, init,
      [&](State& st, const BridgePath& path, std::int64_t i) {
        // scalar and divergence integrals are invariant under reversal of
        // the same discrete path; reuse them verbatim for both directions
        double div_half = 0.0;
        if (!a.is_zero())
          div_half = 0.5 * time_integral(path, [&](std::span<const double> p) {
                       return a.divergence(p);
                     });
        const double scalar = time_integral(path, v);
        const double mag = std::exp(-scalar);
        if (!std::isfinite(mag) || mag > kOverflowLimit)
          throw PathOverflowError(mc.seed, i);
        const double ito_f = ito_line_integral(path, a);
        const double ito_r = ito_line_integral_reversed(path, a, st.av);
        const std::complex<double> zf =
            exp_neg({scalar, ito_f + div_half});
        const std::complex<double> zr =
            exp_neg({scalar, ito_r + div_half});
        st.fwd.add(zf);
        st.rev.add(zr);
        st.diff.add(zf - std::conj(zr));
      },
      [](State& acc, State& st) { acc.merge(st); });

  HermiticityReport rep;
  rep.forward.mean = prefactor * res.fwd.mean();
  rep.forward.std_error = prefactor * res.fwd.standard_error();
  rep.forward.n_samples = mc.n_samples;
  rep.forward.n_steps = mc.n_steps;
  rep.forward.t = t;
  rep.forward.x.assign(x.begin(), x.end());
  rep.forward.y.assign(y.begin(), y.end());
  rep.forward.prefactor = prefactor;
  rep.reversed = rep.forward;
  rep.reversed.mean = prefactor * res.rev.mean();
  rep.reversed.std_error = prefactor * res.rev.standard_error();
  rep.reversed.x.assign(y.begin(), y.end());
  rep.reversed.y.assign(x.begin(), x.end());
  rep.residual = std::abs(prefactor * res.diff.mean());
  rep.residual_std_error = prefactor * res.diff.standard_error();
  return rep;
}

SemigroupReport semigroup_residual(std::span<const double> x,
                                   std::span<const double> z, double t,
                                   double t_prime,
                                   const VectorPotentialSpec& a,
                                   const ScalarPotentialSpec& v,
                                   const Box& quad_box, int quad_n,
                                   const McParams& mc,
                                   double tail_tolerance) {
  check_dims(x, z, a);
  if (!(t > 0.0) || !(t_prime > 0.0))
    throw std::invalid_argument("semigroup: times must be > 0");
  if (quad_box.degenerate() ||
      quad_box.lo.size() != x.size())
    throw std::invalid_argument("semigroup: bad quadrature box");
  for (double b : quad_box.lo)
    if (!std::isfinite(b)) throw std::invalid_argument("semigroup: box must be finite");
  for (double b : quad_box.hi)
    if (!std::isfinite(b)) throw std::invalid_argument("semigroup: box must be finite");
  if (quad_n < 2) throw std::invalid_argument("semigroup: quad_n must be >= 2");

  const int d = static_cast<int>(x.size());

  // tensor trapezoid nodes
  std::int64_t n_nodes = 1;
  for (int j = 0; j < d; ++j) n_nodes *= quad_n;

  std::vector<double> node(d), weights_1d(quad_n);
  std::vector<double> step(d);
  for (int j = 0; j < d; ++j) step[j] = (quad_box.hi[j] - quad_box.lo[j]) / (quad_n - 1);

  // V floor probed on the quadrature nodes (capped at 0) for the tail
  // envelope; valid when the infimum of V is attained inside the box.
  double v_floor = 0.0;

  std::complex<double> quad_sum{0.0, 0.0};
  double quad_var = 0.0;
  for (std::int64_t idx = 0; idx < n_nodes; ++idx) {
    std::int64_t rem = idx;
    double w = 1.0;
    for (int j = 0; j < d; ++j) {
      const int i = static_cast<int>(rem % quad_n);
      rem /= quad_n;
      node[j] = quad_box.lo[j] + step[j] * i;
      w *= step[j] * ((i == 0 || i == quad_n - 1) ? 0.5 : 1.0);
    }
    v_floor = std::min(v_floor, v(node));
    McParams mc1 = mc;
    mc1.seed = derive_seed(mc.seed, 2 * static_cast<std::uint64_t>(idx));
    McParams mc2 = mc;
    mc2.seed = derive_seed(mc.seed, 2 * static_cast<std::uint64_t>(idx) + 1);
    const KernelEstimate k1 = estimate_kernel(x, node, t, a, v, mc1);
    const KernelEstimate k2 = estimate_kernel(node, z, t_prime, a, v, mc2);
    quad_sum += w * k1.mean * k2.mean;
    quad_var += w * w *
                (std::norm(k2.mean) * k1.std_error * k1.std_error +
                 std::norm(k1.mean) * k2.std_error * k2.std_error);
  }

  // Gaussian tail outside the box: k_t k_t' factorizes over the free
  // envelope into free_{t+t'}(x,z) times a normal density in y.
  const double sigma = std::sqrt(t * t_prime / (t + t_prime));
  double inside_mass = 1.0;
  for (int j = 0; j < d; ++j) {
    const double y_star = (t_prime * x[j] + t * z[j]) / (t + t_prime);
    auto cdf = [&](double u) {
      return 0.5 * std::erfc(-(u - y_star) / (sigma * std::sqrt(2.0)));
    };
    inside_mass *= cdf(quad_box.hi[j]) - cdf(quad_box.lo[j]);
  }
  const double tail_mass = 1.0 - inside_mass;
  const double envelope =
      free_kernel_prefactor(x, z, t + t_prime) *
      std::exp(-(t + t_prime) * v_floor);
  if (tail_mass > tail_tolerance)
    throw std::invalid_argument(
        "semigroup: quadrature box too small, Gaussian tail mass " +
        std::to_string(tail_mass) + " exceeds tolerance");

  SemigroupReport rep;
  McParams mc_lhs = mc;
  rep.lhs = estimate_kernel(x, z, t + t_prime, a, v, mc_lhs);
  rep.quadrature = quad_sum;
  rep.quadrature_std_error = std::sqrt(quad_var);
  rep.tail_bound = envelope * tail_mass;
  rep.tail_mass_fraction = tail_mass;
  rep.residual = std::abs(rep.lhs.mean - quad_sum);
  // quadrature and reduction roundoff floor, relevant when the Monte-Carlo
  // variances vanish (constant integrands)
  const double rounding = 1e-13 * std::max(std::abs(rep.lhs.mean),
                                           std::abs(quad_sum));
  rep.error_budget =
      std::sqrt(rep.lhs.std_error * rep.lhs.std_error + quad_var) +
      rep.tail_bound + rounding;
  rep.pass = rep.residual <= 3.0 * rep.error_budget;
  return rep;
}

BoundEnvelopeReport bound_envelope(
    double t, double delta, const VectorPotentialSpec& a,
    const ScalarPotentialSpec& v,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
        sample_points,
    const McParams& mc) {
  if (!(delta > 0.0)) throw std::invalid_argument("bound_envelope: delta <= 0");
  if (sample_points.empty())
    throw std::invalid_argument("bound_envelope: no sample points");

  BoundEnvelopeReport rep;
  rep.delta = delta;
  rep.max_observed = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sample_points.size(); ++i) {
    const auto& [px, py] = sample_points[i];
    McParams mci = mc;
    mci.seed = derive_seed(mc.seed, i);
    const KernelEstimate est = estimate_kernel(px, py, t, a, v, mci);
    EnvelopeSample s;
    s.x = px;
    s.y = py;
    s.kernel_mean = est.mean;
    s.kernel_std_error = est.std_error;
    s.statistic = std::log(std::abs(est.mean)) + dist2(px, py) / (4.0 * t) -
                  delta * (norm2(px) + norm2(py));
    if (s.statistic > rep.max_observed) {
      rep.max_observed = s.statistic;
      rep.argmax_index = i;
    }
    rep.samples.push_back(std::move(s));
  }
  return rep;
}

DiamagneticReport diamagnetic_check(std::span<const double> x,
                                    std::span<const double> y, double t,
                                    const VectorPotentialSpec& a,
                                    const ScalarPotentialSpec& v,
                                    const McParams& mc) {
  check_dims(x, y, a);
  if (!a.has_divergence())
    throw std::logic_error("diamagnetic: A needs a declared divergence");
  const double prefactor = free_kernel_prefactor(x, y, t);

  struct State {
    ComplexMoments with_a;
    Moments without_a;
    void merge(State& o) {
      with_a.merge(o.with_a);
      without_a.merge(o.without_a);
    }
  };

  auto res = run_paths(
      x, y, t, mc, State{},
      [&](State& st, const BridgePath& path, std::int64_t i) {
        const ActionValue s = action(path, a, v);
        const double mag = std::exp(-s.scalar_part);
        if (!std::isfinite(mag) || mag > kOverflowLimit)
          throw PathOverflowError(mc.seed, i);
        st.with_a.add(exp_neg(s.value));
        st.without_a.add(mag);
      },
      [](State& acc, State& st) { acc.merge(st); });

  DiamagneticReport rep;
  rep.lhs = prefactor * std::abs(res.with_a.mean());
  rep.rhs = prefactor * res.without_a.mean();
  rep.lhs_std_error = prefactor * res.with_a.standard_error();
  rep.rhs_std_error = prefactor * res.without_a.standard_error();
  const double combined = std::sqrt(rep.lhs_std_error * rep.lhs_std_error +
                                    rep.rhs_std_error * rep.rhs_std_error);
  rep.margin_sigmas =
      combined > 0.0 ? (rep.rhs - rep.lhs) / combined
                     : (rep.rhs == rep.lhs ? 0.0
                                           : std::numeric_limits<double>::infinity());
  rep.pass = rep.lhs <= rep.rhs + 3.0 * combined;
  return rep;
}

TruncationReport truncation_convergence(std::span<const double> x,
                                        std::span<const double> y, double t,
                                        const VectorPotentialSpec& a,
                                        const ScalarPotentialSpec& v,
                                        const std::vector<double>& radii,
                                        double rho, double rho_tilde,
                                        const McParams& mc) {
  check_dims(x, y, a);
  if (radii.empty())
    throw std::invalid_argument("truncation: empty radius list");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 1.0))
      throw std::invalid_argument("truncation: radii must exceed 1");
    if (i > 0 && radii[i] <= radii[i - 1])
      throw std::invalid_argument("truncation: radii must be increasing");
  }
  if (!a.has_divergence())
    throw std::logic_error("truncation: A needs a declared divergence");

  const std::size_t n_r = radii.size();
  const double prefactor = free_kernel_prefactor(x, y, t);
  const double weight =
      std::exp(rho * norm2(x) - rho_tilde * norm2(y));

  struct State {
    std::vector<ComplexMoments> diff;
    std::vector<double> v2_r;  // scratch: truncated V2 integrals per radius
    void merge(State& o) {
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i].merge(o.diff[i]);
    }
  };
  State init;
  init.diff.resize(n_r);
  init.v2_r.resize(n_r);

  auto res = run_paths(
      x, y, t, mc, init,
      [&](State& st, const BridgePath& path, std::int64_t i) {
        const int n = path.grid.n_steps;
        double v1_acc = 0.0, v2_acc = 0.0;
        std::fill(st.v2_r.begin(), st.v2_r.end(), 0.0);
        for (int k = 0; k <= n; ++k) {
          const auto p = path.node(k);
          const double w = (k == 0 || k == n) ? 0.5 : 1.0;
          const double v1v = v.v1_at(p);
          const double v2v = v.v2_at(p);
          if (!std::isfinite(v1v) || !std::isfinite(v2v))
            throw std::runtime_error("truncation: non-finite potential value");
          v1_acc += w * v1v;
          v2_acc += w * v2v;
          const double r2 = norm2(p);
          for (std::size_t r = 0; r < n_r; ++r)
            if (r2 < radii[r] * radii[r]) st.v2_r[r] += w * v2v;
        }
        const double dt = path.grid.dt();
        double imag = 0.0;
        if (!a.is_zero()) {
          imag = ito_line_integral(path, a) +
                 0.5 * time_integral(path, [&](std::span<const double> p) {
                   return a.divergence(p);
                 });
        }
        const double scalar_full = (v1_acc + v2_acc) * dt;
        const double mag_full = std::exp(-scalar_full);
        if (!std::isfinite(mag_full) || mag_full > kOverflowLimit)
          throw PathOverflowError(mc.seed, i);
        const std::complex<double> z_full = exp_neg({scalar_full, imag});
        for (std::size_t r = 0; r < n_r; ++r) {
          const double scalar_r = (v1_acc + st.v2_r[r]) * dt;
          const double mag_r = std::exp(-scalar_r);
          if (!std::isfinite(mag_r) || mag_r > kOverflowLimit)
            throw PathOverflowError(mc.seed, i);
          st.diff[r].add(z_full - exp_neg({scalar_r, imag}));
        }
      },
      [](State& acc, State& st) { acc.merge(st); });

  TruncationReport rep;
  std::vector<double> log_r, log_err;
  for (std::size_t r = 0; r < n_r; ++r) {
    TruncationEntry e;
    e.radius = radii[r];
    const double m = std::abs(res.diff[r].mean());
    const double se = res.diff[r].standard_error();
    e.weighted_error = weight * prefactor * m;
    e.noise_floor = weight * prefactor * se;
    e.in_fit = m > 5.0 * se && m > 0.0;
    if (e.in_fit) {
      log_r.push_back(std::log(e.radius));
      log_err.push_back(std::log(e.weighted_error));
    }
    rep.entries.push_back(e);
  }
  rep.n_fit = static_cast<int>(log_r.size());
  if (rep.n_fit >= 2) {
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < rep.n_fit; ++i) {
      mx += log_r[i];
      my += log_err[i];
    }
    mx /= rep.n_fit;
    my /= rep.n_fit;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < rep.n_fit; ++i) {
      sxx += (log_r[i] - mx) * (log_r[i] - mx);
      sxy += (log_r[i] - mx) * (log_err[i] - my);
    }
    rep.fitted_slope = sxy / sxx;
    rep.rate_resolved = true;
  } else {
    rep.fitted_slope = std::numeric_limits<double>::quiet_NaN();
    rep.rate_resolved = false;
    rep.message = "rate indistinguishable from noise";
  }
  return rep;
}

}  // namespace fkmc
