#include "fkmc/experiments.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <sstream>

#include "fkmc/closed_forms.hpp"
#include "fkmc/kernel.hpp"
#include "fkmc/potentials.hpp"
#include "fkmc/random_fields.hpp"
#include "fkmc/serialization.hpp"
#include "fkmc/spectral.hpp"
#include "fkmc/version.hpp"

namespace fkmc {

namespace {

using nlohmann::json;

const json& require(const json& j, const char* key) {
  if (!j.contains(key))
    throw SchemaError(std::string("config: missing required key '") + key + "'");
  return j.at(key);
}

template <class T>
T require_as(const json& j, const char* key) {
  try {
    return require(j, key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: bad value for '") + key + "': " +
                      e.what());
  }
}

template <class T>
T value_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: bad value for '") + key + "': " +
                      e.what());
  }
}

McParams mc_params(const json& config) {
  McParams mc;
  const json& m = require(config, "mc");
  mc.n_samples = require_as<std::int64_t>(m, "n_samples");
  mc.n_steps = require_as<int>(m, "n_steps");
  mc.seed = value_or<std::uint64_t>(config, "seed", 0);
  mc.workers = value_or<int>(config, "workers", 0);
  if (mc.n_samples < 2) throw SchemaError("config: mc.n_samples must be >= 2");
  if (mc.n_steps < 1) throw SchemaError("config: mc.n_steps must be >= 1");
  return mc;
}

ScalarPotentialSpec scalar_spec(const json& config, const char* key) {
  if (!config.contains(key)) return scalar_zero();
  try {
    return serde::scalar_spec_from_json(config.at(key));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: bad scalar potential: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("config: bad scalar potential: ") + e.what());
  }
}

VectorPotentialSpec vector_spec(const json& config, const char* key) {
  if (!config.contains(key)) return VectorPotentialSpec::zero();
  try {
    return serde::vector_spec_from_json(config.at(key));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: bad vector potential: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("config: bad vector potential: ") + e.what());
  }
}

GaussianFieldSpec field_spec(const json& config, const char* key) {
  try {
    return serde::field_spec_from_json(require(config, key));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: bad field spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("config: bad field spec: ") + e.what());
  }
}

std::vector<double> point(const json& config, const char* key) {
  auto v = require_as<std::vector<double>>(config, key);
  if (v.empty()) throw SchemaError(std::string("config: empty point '") + key + "'");
  return v;
}

struct Checks {
  json list = json::array();
  bool all_pass = true;

  void add(const std::string& name, bool pass, json detail = json::object()) {
    detail["name"] = name;
    detail["pass"] = pass;
    list.push_back(std::move(detail));
    all_pass = all_pass && pass;
  }
};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

/// Energy grid either as an explicit ascending array or {"min","max","n"}.
std::vector<double> energy_grid(const json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  const double lo = require_as<double>(j, "min");
  const double hi = require_as<double>(j, "max");
  const int n = require_as<int>(j, "n");
  if (n < 2 || !(hi > lo)) throw SchemaError("config: bad energy grid");
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i) grid[i] = lo + (hi - lo) * i / (n - 1.0);
  return grid;
}

std::function<double(double)> bounded_function(const json& j, double& gamma,
                                               double& tau) {
  const std::string kind = value_or<std::string>(j, "kind", "exp_min");
  if (kind == "exp_min") {
    gamma = value_or<double>(j, "gamma", 1.0);
    tau = value_or<double>(j, "tau", 1.0);
    const double g = gamma, tv = tau;
    return [g, tv](double e) { return g * std::min(1.0, std::exp(-tv * e)); };
  }
  if (kind == "heat") {
    const double s = require_as<double>(j, "s");
    gamma = 1.0;
    tau = s;
    return [s](double e) { return std::exp(-s * e); };
  }
  if (kind == "indicator") {
    const double lo = require_as<double>(j, "lo");
    const double hi = require_as<double>(j, "hi");
    gamma = 1.0;
    tau = 1.0;
    return [lo, hi](double e) { return (e >= lo && e < hi) ? 1.0 : 0.0; };
  }
  throw SchemaError("config: unknown bounded-function kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// subcommands

void run_kernel(const json& config, json& results, Checks& checks,
                std::string& csv) {
  const auto x = point(config, "x");
  const auto y = point(config, "y");
  const double t = require_as<double>(config, "t");
  const auto v = scalar_spec(config, "scalar_potential");
  const auto a = vector_spec(config, "vector_potential");
  const McParams mc = mc_params(config);
  const KernelEstimate est = estimate_kernel(x, y, t, a, v, mc);
  results = serde::to_json(est);
  checks.add("no_tail_warning", !est.tail_flagged,
             {{"tail_top_mass_fraction", est.tail_top_mass_fraction}});
  std::ostringstream os;
  os << "mean_re,mean_im,stderr,n_samples,n_steps,seed\n";
  os.precision(17);
  os << est.mean.real() << "," << est.mean.imag() << "," << est.std_error
     << "," << est.n_samples << "," << est.n_steps << "," << mc.seed << "\n";
  csv = os.str();
}

void run_hermiticity(const json& config, json& results, Checks& checks) {
  const auto x = point(config, "x");
  const auto y = point(config, "y");
  const double t = require_as<double>(config, "t");
  const auto v = scalar_spec(config, "scalar_potential");
  const auto a = vector_spec(config, "vector_potential");
  const HermiticityReport rep =
      hermiticity_residual(x, y, t, a, v, mc_params(config));
  results = {{"forward", serde::to_json(rep.forward)},
             {"reversed", serde::to_json(rep.reversed)},
             {"residual", rep.residual},
             {"residual_stderr", rep.residual_std_error}};
  const double tol = 3.0 * rep.residual_std_error +
                     1e-13 * std::max(1.0, std::abs(rep.forward.mean));
  checks.add("hermitian", rep.residual <= tol,
             {{"residual", rep.residual}, {"tolerance", tol}});
}

void run_semigroup(const json& config, json& results, Checks& checks) {
  const auto x = point(config, "x");
  const auto z = point(config, "z");
  const double t = require_as<double>(config, "t");
  const double t2 = require_as<double>(config, "t_prime");
  const auto v = scalar_spec(config, "scalar_potential");
  const auto a = vector_spec(config, "vector_potential");
  const double half = require_as<double>(config, "quad_half_width");
  const int quad_n = require_as<int>(config, "quad_n");
  std::vector<double> center(x.size(), 0.0);
  if (config.contains("quad_center"))
    center = point(config, "quad_center");
  else
    for (std::size_t j = 0; j < x.size(); ++j) center[j] = 0.5 * (x[j] + z[j]);
  Box box;
  for (std::size_t j = 0; j < x.size(); ++j) {
    box.lo.push_back(center[j] - half);
    box.hi.push_back(center[j] + half);
  }
  const SemigroupReport rep = semigroup_residual(
      x, z, t, t2, a, v, box, quad_n, mc_params(config),
      value_or<double>(config, "tail_tolerance", 1e-6));
  results = {{"lhs", serde::to_json(rep.lhs)},
             {"quadrature_re", rep.quadrature.real()},
             {"quadrature_im", rep.quadrature.imag()},
             {"quadrature_stderr", rep.quadrature_std_error},
             {"tail_bound", rep.tail_bound},
             {"residual", rep.residual},
             {"error_budget", rep.error_budget}};
  checks.add("semigroup", rep.pass,
             {{"residual", rep.residual}, {"error_budget", rep.error_budget}});
  if (config.contains("max_budget_fraction")) {
    const double frac = config.at("max_budget_fraction").get<double>();
    checks.add("budget_small_enough",
               rep.error_budget <= frac * std::abs(rep.lhs.mean),
               {{"budget", rep.error_budget},
                {"bound", frac * std::abs(rep.lhs.mean)}});
  }
}

void run_bound_envelope(const json& config, json& results, Checks& checks,
                        std::string& csv) {
  const double t = require_as<double>(config, "t");
  const double delta = require_as<double>(config, "delta");
  const auto v = scalar_spec(config, "scalar_potential");
  const auto a = vector_spec(config, "vector_potential");
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pts;
  for (const auto& p : require(config, "sample_points")) {
    pts.emplace_back(p.at("x").get<std::vector<double>>(),
                     p.at("y").get<std::vector<double>>());
  }
  const BoundEnvelopeReport rep =
      bound_envelope(t, delta, a, v, pts, mc_params(config));
  json samples = json::array();
  std::ostringstream os;
  os << "index,statistic,kernel_re,kernel_im,kernel_stderr\n";
  os.precision(17);
  for (std::size_t i = 0; i < rep.samples.size(); ++i) {
    const auto& s = rep.samples[i];
    samples.push_back({{"x", s.x},
                       {"y", s.y},
                       {"statistic", s.statistic},
                       {"kernel_re", s.kernel_mean.real()},
                       {"kernel_im", s.kernel_mean.imag()},
                       {"kernel_stderr", s.kernel_std_error}});
    os << i << "," << s.statistic << "," << s.kernel_mean.real() << ","
       << s.kernel_mean.imag() << "," << s.kernel_std_error << "\n";
  }
  results = {{"delta", rep.delta},
             {"max_observed", rep.max_observed},
             {"argmax_index", rep.argmax_index},
             {"fitted_envelope_constant", std::exp(rep.max_observed)},
             {"samples", std::move(samples)}};
  checks.add("envelope_finite", std::isfinite(rep.max_observed),
             {{"max_observed", rep.max_observed}});
  csv = os.str();
}

void run_diamagnetic(const json& config, json& results, Checks& checks) {
  const auto x = point(config, "x");
  const auto y = point(config, "y");
  const double t = require_as<double>(config, "t");
  const auto v = scalar_spec(config, "scalar_potential");
  const auto a = vector_spec(config, "vector_potential");
  const DiamagneticReport rep =
      diamagnetic_check(x, y, t, a, v, mc_params(config));
  results = {{"lhs", rep.lhs},
             {"rhs", rep.rhs},
             {"lhs_stderr", rep.lhs_std_error},
             {"rhs_stderr", rep.rhs_std_error},
             {"margin_sigmas", rep.margin_sigmas}};
  checks.add("diamagnetic", rep.pass,
             {{"lhs", rep.lhs}, {"rhs", rep.rhs}});
  if (config.contains("require_strict_sigmas")) {
    const double need = config.at("require_strict_sigmas").get<double>();
    checks.add("diamagnetic_strict", rep.margin_sigmas > need,
               {{"margin_sigmas", rep.margin_sigmas}, {"required", need}});
  }
}

void run_truncation(const json& config, json& results, Checks& checks,
                    std::string& csv) {
  const auto x = point(config, "x");
  const auto y = point(config, "y");
  const double t = require_as<double>(config, "t");
  const auto v = scalar_spec(config, "scalar_potential");
  const auto a = vector_spec(config, "vector_potential");
  const auto radii = require_as<std::vector<double>>(config, "radii");
  const double rho = value_or<double>(config, "rho", 0.0);
  const double rho_tilde = value_or<double>(config, "rho_tilde", 0.0);
  const TruncationReport rep = truncation_convergence(
      x, y, t, a, v, radii, rho, rho_tilde, mc_params(config));
  json entries = json::array();
  std::ostringstream os;
  os << "R,weighted_error,noise_floor,in_fit\n";
  os.precision(17);
  for (const auto& e : rep.entries) {
    entries.push_back({{"R", e.radius},
                       {"weighted_error", e.weighted_error},
                       {"noise_floor", e.noise_floor},
                       {"in_fit", e.in_fit}});
    os << e.radius << "," << e.weighted_error << "," << e.noise_floor << ","
       << (e.in_fit ? 1 : 0) << "\n";
  }
  results = {{"entries", std::move(entries)},
             {"fitted_slope", rep.rate_resolved ? json(rep.fitted_slope) : json()},
             {"n_fit", rep.n_fit},
             {"rate_resolved", rep.rate_resolved},
             {"message", rep.message}};
  if (config.contains("slope_window")) {
    const auto w = config.at("slope_window").get<std::vector<double>>();
    if (w.size() != 2) throw SchemaError("config: slope_window needs [lo, hi]");
    const bool in_window = rep.rate_resolved && rep.fitted_slope >= w[0] &&
                           rep.fitted_slope <= w[1];
    const bool must_resolve = value_or<bool>(config, "require_resolved", true);
    checks.add("slope_in_window",
               must_resolve ? in_window : (!rep.rate_resolved || in_window),
               {{"fitted_slope", rep.fitted_slope},
                {"window", w},
                {"n_fit", rep.n_fit}});
  }
  csv = os.str();
}

void run_gaussian_identity(const json& config, json& results, Checks& checks) {
  const json& p = require(config, "path");
  const auto x = point(p, "x");
  const auto y = point(p, "y");
  const TimeGrid grid(require_as<double>(p, "t"), require_as<int>(p, "n_steps"));
  const BridgePath path =
      sample_bridge(value_or<std::uint64_t>(p, "seed", 1), x, y, grid);
  const GaussianFieldSpec field = field_spec(config, "field");
  const std::int64_t n_field = require_as<std::int64_t>(config, "n_field_samples");
  const GaussianIdentityReport rep = gaussian_identity_residual(
      path, field, n_field, value_or<std::uint64_t>(config, "seed", 0),
      value_or<int>(config, "workers", 0));
  results = {{"mc_value", rep.mc_value},
             {"mc_stderr", rep.mc_std_error},
             {"closed_form", rep.closed_form},
             {"residual", rep.residual},
             {"n_field_samples", rep.n_field_samples}};
  const double tol = 3.0 * rep.mc_std_error / rep.closed_form + 1e-12;
  checks.add("gaussian_identity", rep.residual <= tol,
             {{"residual", rep.residual}, {"tolerance", tol}});
}

void run_averaged_kernel(const json& config, json& results, Checks& checks) {
  const auto x = point(config, "x");
  const auto y = point(config, "y");
  const double t = require_as<double>(config, "t");
  const auto a = vector_spec(config, "vector_potential");
  const GaussianFieldSpec field = field_spec(config, "field");
  const McParams mc = mc_params(config);
  const KernelEstimate est = averaged_kernel(x, y, t, a, field, mc);
  results = {{"direct", serde::to_json(est)}};
  checks.add("no_tail_warning", !est.tail_flagged,
             {{"tail_top_mass_fraction", est.tail_top_mass_fraction}});
  if (config.contains("fubini_check")) {
    const json& f = config.at("fubini_check");
    McParams mc2 = mc;
    mc2.n_samples = value_or<std::int64_t>(f, "n_samples", mc.n_samples);
    mc2.n_steps = value_or<int>(f, "n_steps", mc.n_steps);
    const std::int64_t n_field = require_as<std::int64_t>(f, "n_field_samples");
    const KernelEstimate two =
        averaged_kernel_two_stage(x, y, t, a, field, mc2, n_field);
    results["two_stage"] = serde::to_json(two);
    const double gap = std::abs(est.mean - two.mean);
    const double tol = 3.0 * std::sqrt(est.std_error * est.std_error +
                                       two.std_error * two.std_error);
    checks.add("fubini_consistency", gap <= tol,
               {{"gap", gap}, {"tolerance", tol}});
  }
}

void run_averaged_bounds(const json& config, json& results, Checks& checks) {
  const auto x = point(config, "x");
  const auto y = point(config, "y");
  const double t = require_as<double>(config, "t");
  const auto a = vector_spec(config, "vector_potential");
  const GaussianFieldSpec field = field_spec(config, "field");
  const AveragedBoundsReport rep =
      averaged_bound_checks(x, y, t, field, a, mc_params(config));
  results = {{"estimate", serde::to_json(rep.estimate)},
             {"diag_a0", serde::to_json(rep.diag_a0)},
             {"free_bound_rhs", rep.free_bound_rhs},
             {"sharp_rhs", rep.sharp_rhs},
             {"sharp_rhs_stderr", rep.sharp_rhs_std_error}};
  checks.add("free_kernel_domination", rep.free_bound_pass,
             {{"lhs", std::abs(rep.estimate.mean)},
              {"rhs", rep.free_bound_rhs}});
  checks.add("sharp_domination", rep.sharp_pass,
             {{"lhs", std::abs(rep.estimate.mean)}, {"rhs", rep.sharp_rhs}});
}

struct GridParams {
  double box_side;
  int n_per_dim;
  int dim;
};

GridParams grid_params(const json& config, int default_dim = 1) {
  const json& g = require(config, "grid");
  GridParams p;
  p.box_side = require_as<double>(g, "box_side");
  p.n_per_dim = require_as<int>(g, "n_per_dim");
  p.dim = value_or<int>(g, "dim", default_dim);
  return p;
}

void run_oracle_compare(const json& config, json& results, Checks& checks) {
  const std::string which = require_as<std::string>(config, "case");
  const double t = value_or<double>(config, "t", 1.0);
  const GridParams g = grid_params(config, which == "landau" ? 2 : 1);
  if (g.n_per_dim % 4 != 0)
    throw SchemaError(
        "config: oracle-compare needs n_per_dim divisible by 4 so every "
        "refinement grid keeps a site at the origin");

  ScalarPotentialSpec v = scalar_zero();
  VectorPotentialSpec a = VectorPotentialSpec::zero();
  int dim = g.dim;
  double closed = 0.0;
  if (which == "free") {
    const std::vector<double> origin(dim, 0.0);
    closed = free_heat_kernel(origin, origin, t);
  } else if (which == "harmonic") {
    const double omega = value_or<double>(config, "omega", 1.0);
    dim = 1;
    v = scalar_harmonic({omega});
    closed = mehler_kernel(0.0, 0.0, t, omega);
  } else if (which == "landau") {
    const double b = value_or<double>(config, "b", 1.0);
    dim = 2;
    a = poincare_gauge({0.0, b, -b, 0.0}, 2);
    closed = landau_diagonal(b, t);
  } else {
    throw SchemaError("config: oracle-compare case must be free|harmonic|landau");
  }

  const std::vector<double> origin(dim, 0.0);
  const KernelEstimate mc = estimate_kernel(origin, origin, t, a, v,
                                            mc_params(config));

  auto grid_value = [&](double box_side, int n_per_dim) {
    const GridHamiltonian ham =
        build_grid_hamiltonian(box_side, n_per_dim, dim, a, v);
    const SpectralDecomposition dec = decompose(ham);
    const std::int64_t center = ham.geom.nearest_site(origin);
    return heat_kernel(dec, t, center, center).real();
  };
  const double k_fine = grid_value(g.box_side, g.n_per_dim);
  const double k_small_box = grid_value(0.5 * g.box_side, g.n_per_dim / 2);
  const double k_coarse = grid_value(g.box_side, g.n_per_dim / 2);
  const double boundary_budget = std::abs(k_fine - k_small_box);
  const double spacing_budget = std::abs(k_fine - k_coarse);
  const double budget = boundary_budget + spacing_budget;

  results = {{"case", which},
             {"mc", serde::to_json(mc)},
             {"closed_form", closed},
             {"grid_value", k_fine},
             {"boundary_budget", boundary_budget},
             {"spacing_budget", spacing_budget},
             {"budget", budget}};

  checks.add("mc_vs_closed",
             std::abs(mc.mean.real() - closed) <= 3.0 * mc.std_error &&
                 std::abs(mc.mean.imag()) <= 3.0 * mc.std_error,
             {{"mc", mc.mean.real()},
              {"closed", closed},
              {"stderr", mc.std_error}});
  checks.add("mc_vs_grid",
             std::abs(mc.mean.real() - k_fine) <=
                 3.0 * (mc.std_error + budget),
             {{"mc", mc.mean.real()}, {"grid", k_fine}, {"budget", budget}});
  if (config.contains("grid_agreement_fraction")) {
    const double frac = config.at("grid_agreement_fraction").get<double>();
    checks.add("mc_vs_grid_fraction",
               std::abs(mc.mean.real() - k_fine) <=
                   frac * std::abs(k_fine) + 3.0 * mc.std_error,
               {{"mc", mc.mean.real()},
                {"grid", k_fine},
                {"fraction", frac}});
  }
}

void run_spectral_checks(const json& config, json& results, Checks& checks) {
  const GridParams g = grid_params(config);
  const auto v = scalar_spec(config, "scalar_potential");
  const auto a = vector_spec(config, "vector_potential");
  const GridHamiltonian ham =
      build_grid_hamiltonian(g.box_side, g.n_per_dim, g.dim, a, v);
  const SpectralDecomposition dec = decompose(ham);
  const std::int64_t n = dec.n_sites();
  results["n_sites"] = n;
  results["h"] = ham.geom.h();
  results["e_min"] = dec.eigenvalues(0);
  results["e_max"] = dec.eigenvalues(dec.eigenvalues.size() - 1);

  // assembled-matrix hermiticity and eigen residuals
  {
    const Eigen::MatrixXcd m = ham.assemble();
    const double scale = m.cwiseAbs().maxCoeff();
    const double herm = (m - m.adjoint()).cwiseAbs().maxCoeff();
    checks.add("matrix_hermitian", herm <= 1e-12 * scale,
               {{"max_asymmetry", herm}, {"scale", scale}});
    if (a.is_zero())
      checks.add("matrix_real", m.imag().cwiseAbs().maxCoeff() == 0.0);
  }
  {
    const double e_scale = std::max(std::abs(dec.eigenvalues(0)),
                                    std::abs(dec.eigenvalues(n - 1)));
    double worst = 0.0;
    for (int k = 0; k < n; ++k)
      worst = std::max(worst, dec.eigen_residual(k));
    checks.add("eigen_residuals", worst <= 1e-8 * e_scale,
               {{"max_residual", worst}, {"scale", e_scale}});
    const Eigen::MatrixXcd gram =
        dec.hd() * (dec.site_functions.adjoint() * dec.site_functions);
    const double ortho =
        (gram - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
    checks.add("orthonormal", ortho <= 1e-10, {{"max_deviation", ortho}});
  }

  EnergySet interval;
  if (config.contains("interval")) {
    const json& iv = config.at("interval");
    interval.push_back({value_or<double>(iv, "lo",
                                         -std::numeric_limits<double>::infinity()),
                        require_as<double>(iv, "hi")});
  } else {
    // default: lower half of the spectrum
    interval.push_back({-std::numeric_limits<double>::infinity(),
                        dec.eigenvalues(n / 2)});
  }

  // random bounded site weight
  std::vector<double> w(static_cast<std::size_t>(n));
  {
    CounterRng rng(value_or<std::uint64_t>(config, "seed", 0),
                   RngStream::SiteWeights, 0);
    for (auto& wi : w) wi = 2.0 * rng.uniform() - 1.0;
  }

  const TraceCheckReport trace = trace_formula_check(dec, interval, w);
  results["trace_formula"] = {{"lhs", trace.lhs},
                              {"rhs", trace.rhs},
                              {"residual_rel", trace.residual_rel}};
  checks.add("trace_formula", trace.residual_rel <= 1e-10,
             {{"residual_rel", trace.residual_rel}});

  double gamma = 1.0, tau = 1.0;
  const std::function<double(double)> f =
      bounded_function(value_or<json>(config, "bounded_function",
                                      json{{"kind", "exp_min"}}),
                       gamma, tau);
  const TraceCheckReport hs = hs_norm_check(dec, f, w);
  results["hs_norm"] = {{"lhs", hs.lhs},
                        {"rhs", hs.rhs},
                        {"residual_rel", hs.residual_rel}};
  checks.add("hs_norm", hs.residual_rel <= 1e-10,
             {{"residual_rel", hs.residual_rel}});

  const double t_check = value_or<double>(config, "t_check", 0.4 * tau);
  const std::int64_t x_site = ham.geom.nearest_site(
      std::vector<double>(g.dim, 0.0));
  const std::int64_t y_site = ham.geom.nearest_site(
      std::vector<double>(g.dim, 0.25 * g.box_side));
  const BoundedFunctionReport bf =
      bounded_function_kernel(dec, f, gamma, tau, x_site, y_site, t_check);
  results["functional_calculus"] = {
      {"direct_re", bf.direct.real()},
      {"direct_im", bf.direct.imag()},
      {"composed_t1_re", bf.composed_t1.real()},
      {"composed_t2_re", bf.composed_t2.real()},
      {"t1", bf.t1},
      {"t2", bf.t2},
      {"max_rel_gap", bf.max_rel_gap}};
  checks.add("functional_calculus_t_independent", bf.max_rel_gap <= 1e-8,
             {{"max_rel_gap", bf.max_rel_gap}});

  const double t = value_or<double>(config, "t", 1.0);
  const ProjectionBoundsReport pb =
      projection_diagonal_bounds(dec, interval, t);
  results["projection_bounds"] = {
      {"min_diagonal", pb.min_diagonal},
      {"max_upper_violation", pb.max_upper_violation}};
  checks.add("projection_diagonal_bounds", pb.pass,
             {{"min_diagonal", pb.min_diagonal},
              {"max_upper_violation", pb.max_upper_violation}});

  // initial-value problem: smooth bump, central differences, dt halving
  {
    const double dt = value_or<double>(config, "dt", t / 20.0);
    Eigen::VectorXcd phi(n);
    std::vector<double> xc;
    const double width = g.box_side / 8.0;
    for (std::int64_t u = 0; u < n; ++u) {
      ham.geom.site_coords(u, xc);
      double r2 = 0.0;
      for (double c : xc) r2 += c * c;
      phi(u) = std::exp(-r2 / (2.0 * width * width));
    }
    const double r1 = initial_value_residual(dec, phi, t, dt);
    const double r2 = initial_value_residual(dec, phi, t, 0.5 * dt);
    const double ratio = r2 / r1;
    results["initial_value"] = {{"residual_dt", r1},
                                {"residual_half_dt", r2},
                                {"ratio", ratio}};
    checks.add("initial_value_second_order", ratio >= 0.2 && ratio <= 0.35,
               {{"ratio", ratio}});
  }

  // plaquette phases for constant fields in d >= 2
  if (g.dim >= 2 && a.kind() == VectorPotentialSpec::Kind::ConstantField) {
    double worst = 0.0;
    const int m = ham.geom.sites_per_axis();
    for (int j = 0; j < g.dim; ++j) {
      for (int k = j + 1; k < g.dim; ++k) {
        const double b =
            a.field_matrix()[static_cast<std::size_t>(j) * g.dim + k];
        const double h2 = ham.geom.h() * ham.geom.h();
        const std::complex<double> expected{std::cos(b * h2),
                                            -std::sin(b * h2)};
        // probe a handful of interior plaquettes
        for (std::int64_t site : {std::int64_t(0), n / 3, n / 2}) {
          std::int64_t stride_j = 1, stride_k = 1;
          for (int x = 0; x < j; ++x) stride_j *= m;
          for (int x = 0; x < k; ++x) stride_k *= m;
          if ((site / stride_j) % m + 1 >= m || (site / stride_k) % m + 1 >= m)
            continue;
          worst = std::max(worst,
                           std::abs(ham.plaquette(site, j, k) - expected));
        }
      }
    }
    results["plaquette_max_error"] = worst;
    checks.add("plaquette_flux", worst <= 1e-12, {{"max_error", worst}});
  }

  // lattice gauge transformation leaves the spectrum unchanged
  {
    std::vector<double> chi(static_cast<std::size_t>(n));
    CounterRng rng(value_or<std::uint64_t>(config, "seed", 0),
                   RngStream::SiteWeights, 1);
    for (auto& c : chi) c = 2.0 * rng.uniform() - 1.0;
    const SpectralDecomposition dec2 = decompose(gauge_transform(ham, chi));
    const double e_scale = std::max(1.0, std::abs(dec.eigenvalues(n - 1)));
    const double shift =
        (dec2.eigenvalues - dec.eigenvalues).cwiseAbs().maxCoeff();
    results["gauge_spectrum_shift"] = shift;
    checks.add("gauge_covariance", shift <= 1e-10 * e_scale,
               {{"max_shift", shift}});
  }

  if (config.contains("dump_hamiltonian")) {
    const std::string path = config.at("dump_hamiltonian").get<std::string>();
    std::ofstream os(path);
    if (!os) throw SchemaError("config: cannot write dump_hamiltonian path");
    dump_text(ham, os);
    results["hamiltonian_dump"] = path;
  }
}

void run_ids(const json& config, json& results, Checks& checks,
             std::string& csv) {
  const GridParams g = grid_params(config);
  const GaussianFieldSpec field = field_spec(config, "field");
  const auto a = vector_spec(config, "vector_potential");
  const double gamma_half = require_as<double>(config, "gamma_half_width");
  const auto grid = energy_grid(require(config, "energies"));
  const int n_real = require_as<int>(config, "n_realizations");
  const IDSResult rep =
      ids_two_ways(a, field, g.box_side, g.n_per_dim, g.dim, gamma_half, grid,
                   n_real, value_or<std::uint64_t>(config, "seed", 0));

  std::ostringstream os;
  os << "E,N_trace,N_diag,stderr\n";
  os.precision(17);
  for (std::size_t i = 0; i < grid.size(); ++i)
    os << grid[i] << "," << rep.trace_curve.values[i] << ","
       << rep.diag_curve.values[i] << "," << rep.trace_curve.std_errors[i]
       << "\n";
  csv = os.str();

  results = {{"energies", rep.trace_curve.energies},
             {"n_trace", rep.trace_curve.values},
             {"n_diag", rep.diag_curve.values},
             {"stderr", rep.trace_curve.std_errors},
             {"gamma_half_width", rep.trace_curve.gamma_half_width},
             {"max_gap", rep.max_gap},
             {"max_gap_stderr", rep.max_gap_std_error},
             {"gamma_sensitivity", rep.gamma_sensitivity},
             {"warnings", rep.warnings}};

  bool monotone = true;
  for (std::size_t i = 1; i < rep.trace_curve.values.size(); ++i)
    if (rep.trace_curve.values[i] < rep.trace_curve.values[i - 1])
      monotone = false;
  checks.add("ids_nondecreasing", monotone);
  const double n_max =
      rep.trace_curve.values.empty() ? 0.0 : rep.trace_curve.values.back();
  const double tol = 3.0 * rep.max_gap_std_error + 0.05 * n_max;
  checks.add("two_way_agreement", rep.max_gap <= tol,
             {{"max_gap", rep.max_gap}, {"tolerance", tol}});
}

void run_laplace(const json& config, json& results, Checks& checks,
                 std::string& csv) {
  const GridParams g = grid_params(config);
  const GaussianFieldSpec field = field_spec(config, "field");
  const double gamma_half = require_as<double>(config, "gamma_half_width");
  const auto grid = energy_grid(require(config, "energies"));
  const auto t_list = require_as<std::vector<double>>(config, "t_list");
  const int n_real = require_as<int>(config, "n_realizations");
  const LaplaceReport rep = laplace_consistency(
      field, g.box_side, g.n_per_dim, g.dim, gamma_half, t_list, grid, n_real,
      value_or<std::uint64_t>(config, "seed", 0));

  std::ostringstream os;
  os << "t,lhs,rhs,residual,bin_budget,stderr,pass\n";
  os.precision(17);
  json entries = json::array();
  for (const auto& e : rep.entries) {
    entries.push_back({{"t", e.t},
                       {"lhs", e.lhs},
                       {"rhs", e.rhs},
                       {"residual", e.residual},
                       {"bin_budget", e.bin_budget},
                       {"stderr", e.std_error},
                       {"pass", e.pass}});
    os << e.t << "," << e.lhs << "," << e.rhs << "," << e.residual << ","
       << e.bin_budget << "," << e.std_error << "," << (e.pass ? 1 : 0)
       << "\n";
    checks.add("laplace_t_" + std::to_string(e.t), e.pass,
               {{"residual", e.residual},
                {"budget", e.bin_budget},
                {"stderr", e.std_error}});
  }
  results = {{"entries", std::move(entries)}};
  csv = os.str();
}

void run_upsilon(const json& config, json& results, Checks& checks,
                 std::string& csv) {
  const int d = value_or<int>(config, "d", 1);
  std::vector<double> xis;
  if (config.contains("xi_list"))
    xis = config.at("xi_list").get<std::vector<double>>();
  else
    xis.push_back(require_as<double>(config, "xi"));
  std::vector<double> values;
  for (double xi : xis) values.push_back(upsilon(xi, d));

  std::ostringstream os;
  os << "xi,d,value\n";
  os.precision(17);
  for (std::size_t i = 0; i < xis.size(); ++i)
    os << xis[i] << "," << d << "," << values[i] << "\n";
  csv = os.str();
  results = {{"xi", xis}, {"d", d}, {"values", values}};

  bool at_least_one = true;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] < 1.0) at_least_one = false;
  checks.add("upsilon_at_least_one", at_least_one);
  bool increasing = true;
  for (std::size_t i = 1; i < xis.size(); ++i)
    if (xis[i] > xis[i - 1] && !(values[i] > values[i - 1])) increasing = false;
  if (xis.size() > 1) checks.add("upsilon_increasing", increasing);
}

void run_kato_kappa(const json& config, json& results, Checks&) {
  ScalarExpr f;
  try {
    f = serde::scalar_expr_from_json(require(config, "f"));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("config: bad f: ") + e.what());
  }
  const double t = require_as<double>(config, "t");
  const int n_s = require_as<int>(config, "n_s");
  const int n_mc = require_as<int>(config, "n_mc");
  const auto probes = require(config, "probe_points");
  std::vector<double> flat;
  int dim = -1;
  for (const auto& p : probes) {
    const auto v = p.get<std::vector<double>>();
    if (dim < 0) dim = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != dim)
      throw SchemaError("config: probe points must share one dimension");
    flat.insert(flat.end(), v.begin(), v.end());
  }
  if (dim < 1) throw SchemaError("config: probe_points must be non-empty");
  const double value = kato_kappa(
      [&f](std::span<const double> x) { return f(x); }, t, n_s, n_mc, flat,
      dim, value_or<std::uint64_t>(config, "seed", 0));
  results = {{"kappa", value}, {"t", t}, {"n_s", n_s}, {"n_mc", n_mc}};
}

}  // namespace

const std::vector<std::string>& experiment_subcommands() {
  static const std::vector<std::string> names = {
      "kernel",          "hermiticity",     "semigroup",
      "bound-envelope",  "diamagnetic",     "truncation-rate",
      "gaussian-identity", "averaged-kernel", "averaged-bounds",
      "oracle-compare",  "spectral-checks", "ids",
      "laplace",         "upsilon",         "kato-kappa"};
  return names;
}

RunResult run_experiment(const nlohmann::json& config) {
  RunResult result;
  result.output["config"] = config;
  try {
    const int schema_version = value_or<int>(config, "schema_version", 1);
    if (schema_version != 1)
      throw SchemaError("config: unsupported schema_version (expected 1)");
    const std::string sub = require_as<std::string>(config, "subcommand");
    const auto& names = experiment_subcommands();
    if (std::find(names.begin(), names.end(), sub) == names.end())
      throw SchemaError("config: unknown subcommand '" + sub + "'");

    json results;
    Checks checks;
    std::string csv;
    if (sub == "kernel") run_kernel(config, results, checks, csv);
    else if (sub == "hermiticity") run_hermiticity(config, results, checks);
    else if (sub == "semigroup") run_semigroup(config, results, checks);
    else if (sub == "bound-envelope") run_bound_envelope(config, results, checks, csv);
    else if (sub == "diamagnetic") run_diamagnetic(config, results, checks);
    else if (sub == "truncation-rate") run_truncation(config, results, checks, csv);
    else if (sub == "gaussian-identity") run_gaussian_identity(config, results, checks);
    else if (sub == "averaged-kernel") run_averaged_kernel(config, results, checks);
    else if (sub == "averaged-bounds") run_averaged_bounds(config, results, checks);
    else if (sub == "oracle-compare") run_oracle_compare(config, results, checks);
    else if (sub == "spectral-checks") run_spectral_checks(config, results, checks);
    else if (sub == "ids") run_ids(config, results, checks, csv);
    else if (sub == "laplace") run_laplace(config, results, checks, csv);
    else if (sub == "upsilon") run_upsilon(config, results, checks, csv);
    else if (sub == "kato-kappa") run_kato_kappa(config, results, checks);

    result.output["subcommand"] = sub;
    result.output["results"] = std::move(results);
    result.output["checks"] = std::move(checks.list);
    result.output["pass"] = checks.all_pass;
    result.output["provenance"] = {
        {"config_hash", hex64(serde::config_hash(config))},
        {"version", kVersion},
        {"schema_version", schema_version},
        {"seed", value_or<std::uint64_t>(config, "seed", 0)},
        {"workers", value_or<int>(config, "workers", 0)}};
    result.csv = std::move(csv);
    result.has_csv = !result.csv.empty();
    if (result.has_csv) {
      // the CSV embeds the exact config as a leading comment
      result.csv = "# config " + config.dump() + "\n" + result.csv;
    }
    result.exit_code = checks.all_pass ? 0 : 1;
  } catch (const SchemaError& e) {
    result.output["error"] = e.what();
    result.exit_code = 2;
  } catch (const nlohmann::json::exception& e) {
    result.output["error"] = std::string("config: ") + e.what();
    result.exit_code = 2;
  } catch (const std::invalid_argument& e) {
    result.output["error"] = e.what();
    result.exit_code = 2;
  } catch (const std::exception& e) {
    result.output["error"] = e.what();
    result.exit_code = 3;
  }
  return result;
}

}  // namespace fkmc
