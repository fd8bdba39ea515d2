#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fkmc/action.hpp"
#include "fkmc/bridge.hpp"
#include "fkmc/potentials.hpp"

namespace fkmc {

/// Monte-Carlo run parameters. All randomness derives from `seed` through
/// counter-based per-path streams, so results do not depend on `workers`;
/// the reduction itself merges fixed-size chunks in a fixed order and is
/// bit-reproducible across pool sizes.
struct McParams {
  std::int64_t n_samples = 10000;
  int n_steps = 256;
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = hardware concurrency
  bool tail_diagnostics = true;
};

/// A per-path summand grew beyond 1e300; clamping would silently bias the
/// estimate, so the run aborts and names the offending path.
struct PathOverflowError : std::runtime_error {
  std::uint64_t seed;
  std::int64_t path_index;
  PathOverflowError(std::uint64_t seed_, std::int64_t index_)
      : std::runtime_error("path summand overflow (|e^{-S}| > 1e300) at path " +
                           std::to_string(index_) + ", seed " +
                           std::to_string(seed_)),
        seed(seed_),
        path_index(index_) {}
};

/// Monte-Carlo estimate of k_t(x, y). mean = prefactor * avg(e^{-S}) with
/// prefactor the free Gaussian factor; std_error combines the component
/// sample variances of the per-path complex summands. The tail flag marks
/// runs where the largest 0.1% of summand magnitudes carry more than half
/// of the total mass: nothing controls the variance of e^{-S} when V2 is
/// unbounded below, so uncertainty is reported, never assumed.
struct KernelEstimate {
  std::complex<double> mean{0.0, 0.0};
  double std_error = 0.0;
  std::int64_t n_samples = 0;
  int n_steps = 0;
  double t = 0.0;
  std::vector<double> x, y;
  double prefactor = 0.0;
  bool tail_flagged = false;
  double tail_top_mass_fraction = 0.0;
};

/// Free Gaussian factor e^{-|x-y|^2/(2t)} / (2 pi t)^{d/2}.
double free_kernel_prefactor(std::span<const double> x,
                             std::span<const double> y, double t);

KernelEstimate estimate_kernel(std::span<const double> x,
                               std::span<const double> y, double t,
                               const VectorPotentialSpec& a,
                               const ScalarPotentialSpec& v,
                               const McParams& mc);

/// Hermiticity check k_t(x,y) = conj(k_t(y,x)). The (y,x) estimate reuses
/// the time-reversed paths of the (x,y) run: the reversed discrete path has
/// exactly the (y,x)-bridge law, and the shared scalar/divergence integrals
/// make the comparison a common-random-number difference statistic.
struct HermiticityReport {
  KernelEstimate forward;
  KernelEstimate reversed;
  double residual = 0.0;
  double residual_std_error = 0.0;
};

HermiticityReport hermiticity_residual(std::span<const double> x,
                                       std::span<const double> y, double t,
                                       const VectorPotentialSpec& a,
                                       const ScalarPotentialSpec& v,
                                       const McParams& mc);

/// Chapman-Kolmogorov residual |k_{t+t'}(x,z) - sum_quad k_t k_{t'}|.
/// The y-integral runs over a finite box with trapezoid weights; the
/// neglected tail is bounded through the free-kernel envelope scaled by
/// e^{-(t+t') V_floor} with V_floor probed on the quadrature nodes
/// (min-capped at 0). Useful boxes satisfy the documented heuristic
/// half-width >= |x-z| + 6 sqrt(t+t').
struct SemigroupReport {
  KernelEstimate lhs;
  std::complex<double> quadrature{0.0, 0.0};
  double quadrature_std_error = 0.0;
  double tail_bound = 0.0;
  double tail_mass_fraction = 0.0;
  double residual = 0.0;
  double error_budget = 0.0;  // sqrt(sigma_lhs^2 + sigma_quad^2) + tail_bound
  bool pass = false;          // residual <= 3 * error_budget
};

SemigroupReport semigroup_residual(std::span<const double> x,
                                   std::span<const double> z, double t,
                                   double t_prime,
                                   const VectorPotentialSpec& a,
                                   const ScalarPotentialSpec& v,
                                   const Box& quad_box, int quad_n,
                                   const McParams& mc,
                                   double tail_tolerance = 1e-6);

/// Observed sup of the log-envelope statistic of the Gaussian bound:
///   log|k_t(x,y)| + |x-y|^2/(4t) - delta(|x|^2 + |y|^2).
/// The constant a_t^(delta) is existential in the source estimate; the
/// report only states the empirical envelope exp(max_observed).
struct EnvelopeSample {
  std::vector<double> x, y;
  double statistic = 0.0;
  std::complex<double> kernel_mean{0.0, 0.0};
  double kernel_std_error = 0.0;
};

struct BoundEnvelopeReport {
  double delta = 0.0;
  std::vector<EnvelopeSample> samples;
  double max_observed = 0.0;
  std::size_t argmax_index = 0;
};

BoundEnvelopeReport bound_envelope(
    double t, double delta, const VectorPotentialSpec& a,
    const ScalarPotentialSpec& v,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
        sample_points,
    const McParams& mc);

/// Diamagnetic comparison |k_t(x,y;A,V)| <= k_t(x,y;0,V) on shared paths
/// (identical seeds). margin_sigmas = (rhs - lhs) / combined std error,
/// for strictness assertions.
struct DiamagneticReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double lhs_std_error = 0.0;
  double rhs_std_error = 0.0;
  double margin_sigmas = 0.0;
  bool pass = false;
};

DiamagneticReport diamagnetic_check(std::span<const double> x,
                                    std::span<const double> y, double t,
                                    const VectorPotentialSpec& a,
                                    const ScalarPotentialSpec& v,
                                    const McParams& mc);

/// V_R convergence study: the weighted error
///   e^{rho |x|^2 - rho~ |y|^2} |k_t(x,y) - k_t^{(R)}(x,y)|
/// estimated with common random numbers across every R, plus the
/// least-squares log-log slope over the radii whose signal exceeds
/// 5x the Monte-Carlo noise floor.
struct TruncationEntry {
  double radius = 0.0;
  double weighted_error = 0.0;
  double noise_floor = 0.0;
  bool in_fit = false;
};

struct TruncationReport {
  std::vector<TruncationEntry> entries;
  double fitted_slope = 0.0;
  int n_fit = 0;
  bool rate_resolved = false;
  std::string message;
};

TruncationReport truncation_convergence(std::span<const double> x,
                                        std::span<const double> y, double t,
                                        const VectorPotentialSpec& a,
                                        const ScalarPotentialSpec& v,
                                        const std::vector<double>& radii,
                                        double rho, double rho_tilde,
                                        const McParams& mc);

}  // namespace fkmc
