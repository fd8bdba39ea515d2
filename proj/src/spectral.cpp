#include "fkmc/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "fkmc/rng.hpp"
#include "fkmc/stats.hpp"

namespace fkmc {

namespace {

void check_site(const LatticeGeometry& g, std::int64_t site) {
  if (site < 0 || site >= g.n_sites())
    throw std::out_of_range("spectral: site index out of range");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t s = seed ^ (0xBF58476D1CE4E5B9ULL * (salt + 1));
  return detail::splitmix64(s);
}

}  // namespace

void LatticeGeometry::site_coords(std::int64_t site,
                                  std::vector<double>& out) const {
  out.resize(dim);
  const int m = sites_per_axis();
  for (int j = 0; j < dim; ++j) {
    out[j] = axis_coord(static_cast<int>(site % m));
    site /= m;
  }
}

std::int64_t LatticeGeometry::site_index(const std::vector<int>& multi) const {
  const int m = sites_per_axis();
  std::int64_t idx = 0;
  for (int j = dim - 1; j >= 0; --j) {
    if (multi[j] < 0 || multi[j] >= m)
      throw std::out_of_range("LatticeGeometry: multi-index out of range");
    idx = idx * m + multi[j];
  }
  return idx;
}

std::int64_t LatticeGeometry::nearest_site(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim)
    throw std::invalid_argument("nearest_site: dimension mismatch");
  const int m = sites_per_axis();
  std::vector<int> multi(dim);
  for (int j = 0; j < dim; ++j) {
    const double raw = (x[j] + 0.5 * box_side) / h() - 1.0;
    int i = static_cast<int>(std::lround(raw));
    i = std::clamp(i, 0, m - 1);
    multi[j] = i;
  }
  return site_index(multi);
}

Eigen::MatrixXcd GridHamiltonian::assemble() const {
  const std::int64_t n = geom.n_sites();
  const int m = geom.sites_per_axis();
  const double h2 = geom.h() * geom.h();
  Eigen::MatrixXcd mat = Eigen::MatrixXcd::Zero(n, n);
  const double diag_kin = geom.dim / h2;
  std::int64_t stride = 1;
  for (std::int64_t u = 0; u < n; ++u)
    mat(u, u) = diag_kin + potential_values[static_cast<std::size_t>(u)];
  for (int j = 0; j < geom.dim; ++j) {
    for (std::int64_t u = 0; u < n; ++u) {
      const int ij = static_cast<int>((u / stride) % m);
      if (ij + 1 >= m) continue;
      const std::int64_t v = u + stride;
      const std::complex<double> ph = link(u, j);
      mat(u, v) = -ph / (2.0 * h2);
      mat(v, u) = -std::conj(ph) / (2.0 * h2);
    }
    stride *= m;
  }
  return mat;
}

void GridHamiltonian::apply(const Eigen::VectorXcd& in,
                            Eigen::VectorXcd& out) const {
  const std::int64_t n = geom.n_sites();
  const int m = geom.sites_per_axis();
  const double h2 = geom.h() * geom.h();
  out.resize(n);
  const double diag_kin = geom.dim / h2;
  for (std::int64_t u = 0; u < n; ++u)
    out(u) = (diag_kin + potential_values[static_cast<std::size_t>(u)]) * in(u);
  std::int64_t stride = 1;
  for (int j = 0; j < geom.dim; ++j) {
    for (std::int64_t u = 0; u < n; ++u) {
      const int ij = static_cast<int>((u / stride) % m);
      if (ij + 1 >= m) continue;
      const std::int64_t v = u + stride;
      const std::complex<double> ph = link(u, j);
      out(u) += -ph / (2.0 * h2) * in(v);
      out(v) += -std::conj(ph) / (2.0 * h2) * in(u);
    }
    stride *= m;
  }
}

std::complex<double> GridHamiltonian::plaquette(std::int64_t site, int j,
                                                int k) const {
  const int m = geom.sites_per_axis();
  std::int64_t stride_j = 1, stride_k = 1;
  for (int a = 0; a < j; ++a) stride_j *= m;
  for (int a = 0; a < k; ++a) stride_k *= m;
  const int ij = static_cast<int>((site / stride_j) % m);
  const int ik = static_cast<int>((site / stride_k) % m);
  if (ij + 1 >= m || ik + 1 >= m)
    throw std::out_of_range("plaquette: site on the boundary");
  const std::int64_t u = site;
  const std::int64_t uj = site + stride_j;
  const std::int64_t uk = site + stride_k;
  return link(u, j) * link(uj, k) * std::conj(link(uk, j)) *
         std::conj(link(u, k));
}

namespace {

GridHamiltonian build_impl(double box_side, int n_per_dim, int dim,
                           const VectorPotentialSpec& a) {
  if (dim < 1 || dim > 3)
    throw std::invalid_argument("build_grid_hamiltonian: dim must be 1..3");
  if (n_per_dim < 2)
    throw std::invalid_argument("build_grid_hamiltonian: n_per_dim must be >= 2");
  if (!(box_side > 0.0))
    throw std::invalid_argument("build_grid_hamiltonian: box_side must be > 0");
  GridHamiltonian ham;
  ham.geom.dim = dim;
  ham.geom.n_per_dim = n_per_dim;
  ham.geom.box_side = box_side;
  const std::int64_t n = ham.geom.n_sites();
  if (n > kMaxSites)
    throw std::invalid_argument("build_grid_hamiltonian: site cap (8192) exceeded");
  if (!a.is_zero() && a.dim() != dim)
    throw std::invalid_argument("build_grid_hamiltonian: A dimension mismatch");

  ham.real_valued = a.is_zero();
  ham.link_phases.assign(static_cast<std::size_t>(n) * dim, {1.0, 0.0});
  if (!a.is_zero()) {
    const double h = ham.geom.h();
    std::vector<double> x(dim), av(dim);
    for (std::int64_t u = 0; u < n; ++u) {
      ham.geom.site_coords(u, x);
      for (int j = 0; j < dim; ++j) {
        x[j] += 0.5 * h;  // link midpoint
        a.eval(x, av);
        x[j] -= 0.5 * h;
        const double phase = -h * av[j];
        ham.link_phases[static_cast<std::size_t>(u) * dim + j] = {
            std::cos(phase), std::sin(phase)};
      }
    }
  }
  return ham;
}

}  // namespace

GridHamiltonian build_grid_hamiltonian(double box_side, int n_per_dim, int dim,
                                       const VectorPotentialSpec& a,
                                       const ScalarPotentialSpec& v) {
  GridHamiltonian ham = build_impl(box_side, n_per_dim, dim, a);
  const std::int64_t n = ham.geom.n_sites();
  ham.potential_values.resize(static_cast<std::size_t>(n));
  std::vector<double> x(dim);
  for (std::int64_t u = 0; u < n; ++u) {
    ham.geom.site_coords(u, x);
    const double val = v(x);
    if (!std::isfinite(val))
      throw std::runtime_error("build_grid_hamiltonian: non-finite V at a site");
    ham.potential_values[static_cast<std::size_t>(u)] = val;
  }
  return ham;
}

GridHamiltonian build_grid_hamiltonian(double box_side, int n_per_dim, int dim,
                                       const VectorPotentialSpec& a,
                                       const std::vector<double>& site_potential) {
  GridHamiltonian ham = build_impl(box_side, n_per_dim, dim, a);
  if (site_potential.size() != static_cast<std::size_t>(ham.geom.n_sites()))
    throw std::invalid_argument("build_grid_hamiltonian: potential size mismatch");
  for (double v : site_potential)
    if (!std::isfinite(v))
      throw std::runtime_error("build_grid_hamiltonian: non-finite V at a site");
  ham.potential_values = site_potential;
  return ham;
}

GridHamiltonian gauge_transform(const GridHamiltonian& ham,
                                const std::vector<double>& chi) {
  if (chi.size() != static_cast<std::size_t>(ham.geom.n_sites()))
    throw std::invalid_argument("gauge_transform: chi size mismatch");
  GridHamiltonian out = ham;
  out.real_valued = false;
  const int m = out.geom.sites_per_axis();
  std::int64_t stride = 1;
  for (int j = 0; j < out.geom.dim; ++j) {
    for (std::int64_t u = 0; u < out.geom.n_sites(); ++u) {
      const int ij = static_cast<int>((u / stride) % m);
      if (ij + 1 >= m) continue;
      const std::int64_t v = u + stride;
      const double dchi = chi[static_cast<std::size_t>(v)] -
                          chi[static_cast<std::size_t>(u)];
      out.link_phases[static_cast<std::size_t>(u) * out.geom.dim + j] *=
          std::complex<double>(std::cos(dchi), -std::sin(dchi));
    }
    stride *= m;
  }
  return out;
}

void dump_text(const GridHamiltonian& ham, std::ostream& os) {
  os << "# lattice dim=" << ham.geom.dim << " n_per_dim=" << ham.geom.n_per_dim
     << " box_side=" << ham.geom.box_side << " h=" << ham.geom.h() << "\n";
  os << "# site <flat index> <coords...> <V>\n";
  os << "# link <flat index> <direction> <phase re> <phase im>\n";
  std::vector<double> x;
  for (std::int64_t u = 0; u < ham.geom.n_sites(); ++u) {
    ham.geom.site_coords(u, x);
    os << "site " << u;
    for (double c : x) os << " " << c;
    os << " " << ham.potential_values[static_cast<std::size_t>(u)] << "\n";
  }
  const int m = ham.geom.sites_per_axis();
  std::int64_t stride = 1;
  for (int j = 0; j < ham.geom.dim; ++j) {
    for (std::int64_t u = 0; u < ham.geom.n_sites(); ++u) {
      const int ij = static_cast<int>((u / stride) % m);
      if (ij + 1 >= m) continue;
      const auto ph = ham.link(u, j);
      os << "link " << u << " " << j << " " << ph.real() << " " << ph.imag()
         << "\n";
    }
    stride *= m;
  }
}

double SpectralDecomposition::eigen_residual(int n) const {
  Eigen::VectorXcd hphi;
  const Eigen::VectorXcd phi = site_functions.col(n);
  ham.apply(phi, hphi);
  const Eigen::VectorXcd r = hphi - eigenvalues(n) * phi;
  return std::sqrt(hd() * r.squaredNorm());
}

SpectralDecomposition decompose(const GridHamiltonian& ham) {
  SpectralDecomposition dec;
  dec.ham = ham;
  const double scale = 1.0 / std::sqrt(ham.geom.hd());
  if (ham.real_valued) {
    Eigen::MatrixXd mat = ham.assemble().real();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(mat);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("decompose: eigensolver failed");
    dec.eigenvalues = solver.eigenvalues();
    dec.site_functions = (solver.eigenvectors() * scale).cast<std::complex<double>>();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(ham.assemble());
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("decompose: eigensolver failed");
    dec.eigenvalues = solver.eigenvalues();
    dec.site_functions = solver.eigenvectors() * scale;
  }
  return dec;
}

bool energy_set_contains(const EnergySet& set, double e) {
  for (const auto& iv : set)
    if (e >= iv.lo && e < iv.hi) return true;
  return false;
}

std::complex<double> heat_kernel(const SpectralDecomposition& dec, double t,
                                 std::int64_t x_site, std::int64_t y_site) {
  if (!(t > 0.0)) throw std::invalid_argument("heat_kernel: t must be > 0");
  check_site(dec.ham.geom, x_site);
  check_site(dec.ham.geom, y_site);
  std::complex<double> acc{0.0, 0.0};
  for (Eigen::Index n = 0; n < dec.eigenvalues.size(); ++n)
    acc += std::exp(-t * dec.eigenvalues(n)) * dec.site_functions(x_site, n) *
           std::conj(dec.site_functions(y_site, n));
  return acc;
}

std::complex<double> projection_kernel(const SpectralDecomposition& dec,
                                       const EnergySet& interval,
                                       std::int64_t x_site,
                                       std::int64_t y_site) {
  check_site(dec.ham.geom, x_site);
  check_site(dec.ham.geom, y_site);
  std::complex<double> acc{0.0, 0.0};
  for (Eigen::Index n = 0; n < dec.eigenvalues.size(); ++n)
    if (energy_set_contains(interval, dec.eigenvalues(n)))
      acc += dec.site_functions(x_site, n) *
             std::conj(dec.site_functions(y_site, n));
  return acc;
}

namespace {

std::complex<double> composed_kernel_value(const SpectralDecomposition& dec,
                                           const std::function<double(double)>& f,
                                           std::int64_t x_site,
                                           std::int64_t y_site, double t) {
  // heat-kernel columns as vectors: w_x(u) = k_t(u, x)
  const Eigen::Index n = dec.eigenvalues.size();
  const double hd = dec.hd();
  Eigen::VectorXcd wx(n), wy(n);
  for (Eigen::Index u = 0; u < n; ++u) {
    std::complex<double> ax{0.0, 0.0}, ay{0.0, 0.0};
    for (Eigen::Index k = 0; k < n; ++k) {
      const double we = std::exp(-t * dec.eigenvalues(k));
      ax += we * dec.site_functions(u, k) * std::conj(dec.site_functions(x_site, k));
      ay += we * dec.site_functions(u, k) * std::conj(dec.site_functions(y_site, k));
    }
    wx(u) = ax;
    wy(u) = ay;
  }
  // apply e^{2tH} F(H) in the eigenbasis: coefficients c_n = h^d phi_n^† v
  Eigen::VectorXcd cy = hd * (dec.site_functions.adjoint() * wy);
  for (Eigen::Index k = 0; k < n; ++k)
    cy(k) *= std::exp(2.0 * t * dec.eigenvalues(k)) * f(dec.eigenvalues(k));
  const Eigen::VectorXcd owy = dec.site_functions * cy;
  // <w_x, O w_y> with the h^d-weighted inner product
  return hd * wx.dot(owy);
}

}  // namespace

BoundedFunctionReport bounded_function_kernel(
    const SpectralDecomposition& dec, const std::function<double(double)>& f,
    double gamma, double tau, std::int64_t x_site, std::int64_t y_site,
    double t_check) {
  if (!(gamma > 0.0) || !(tau > 0.0))
    throw std::invalid_argument("bounded_function_kernel: gamma, tau > 0");
  if (!(t_check > 0.0) || !(t_check < 0.5 * tau))
    throw std::invalid_argument(
        "bounded_function_kernel: t_check must lie in ]0, tau/2[");
  check_site(dec.ham.geom, x_site);
  check_site(dec.ham.geom, y_site);

  BoundedFunctionReport rep;
  for (Eigen::Index n = 0; n < dec.eigenvalues.size(); ++n)
    rep.direct += f(dec.eigenvalues(n)) * dec.site_functions(x_site, n) *
                  std::conj(dec.site_functions(y_site, n));
  rep.t1 = t_check;
  rep.t2 = 0.5 * t_check;
  rep.composed_t1 = composed_kernel_value(dec, f, x_site, y_site, rep.t1);
  rep.composed_t2 = composed_kernel_value(dec, f, x_site, y_site, rep.t2);

  const double scale =
      std::max({std::abs(rep.direct), std::abs(rep.composed_t1),
                std::abs(rep.composed_t2), 1e-300});
  rep.max_rel_gap = std::max(std::abs(rep.direct - rep.composed_t1),
                             std::abs(rep.composed_t1 - rep.composed_t2)) /
                    scale;
  return rep;
}

TraceCheckReport trace_formula_check(const SpectralDecomposition& dec,
                                     const EnergySet& interval,
                                     const std::vector<double>& w) {
  const std::int64_t n = dec.n_sites();
  if (w.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("trace_formula_check: weight size mismatch");
  const double hd = dec.hd();

  TraceCheckReport rep;
  // operator-trace route: sum over eigenstates in I of ||w phi_n||^2
  for (Eigen::Index k = 0; k < dec.eigenvalues.size(); ++k) {
    if (!energy_set_contains(interval, dec.eigenvalues(k))) continue;
    double acc = 0.0;
    for (std::int64_t u = 0; u < n; ++u)
      acc += w[static_cast<std::size_t>(u)] * w[static_cast<std::size_t>(u)] *
             std::norm(dec.site_functions(u, k));
    rep.lhs += hd * acc;
  }
  // kernel-diagonal route
  for (std::int64_t u = 0; u < n; ++u) {
    const double p = projection_kernel(dec, interval, u, u).real();
    rep.rhs += hd * w[static_cast<std::size_t>(u)] *
               w[static_cast<std::size_t>(u)] * p;
  }
  const double scale = std::max({std::abs(rep.lhs), std::abs(rep.rhs), 1e-300});
  rep.residual_rel = std::abs(rep.lhs - rep.rhs) / scale;
  return rep;
}

TraceCheckReport hs_norm_check(const SpectralDecomposition& dec,
                               const std::function<double(double)>& f,
                               const std::vector<double>& w) {
  const std::int64_t n = dec.n_sites();
  if (w.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("hs_norm_check: weight size mismatch");
  const double hd = dec.hd();

  TraceCheckReport rep;
  for (Eigen::Index k = 0; k < dec.eigenvalues.size(); ++k) {
    const double fe = f(dec.eigenvalues(k));
    double acc = 0.0;
    for (std::int64_t u = 0; u < n; ++u)
      acc += w[static_cast<std::size_t>(u)] * w[static_cast<std::size_t>(u)] *
             std::norm(dec.site_functions(u, k));
    rep.lhs += fe * fe * hd * acc;
  }
  // materialized kernel route: f(x,y) = sum_n F(E_n) phi_n(x) phi_n(y)*
  Eigen::VectorXd fvals(dec.eigenvalues.size());
  for (Eigen::Index k = 0; k < dec.eigenvalues.size(); ++k)
    fvals(k) = f(dec.eigenvalues(k));
  const Eigen::MatrixXcd kernel =
      dec.site_functions * fvals.asDiagonal() * dec.site_functions.adjoint();
  for (std::int64_t x = 0; x < n; ++x) {
    double row = 0.0;
    for (std::int64_t y = 0; y < n; ++y) row += std::norm(kernel(x, y));
    rep.rhs += hd * w[static_cast<std::size_t>(x)] *
               w[static_cast<std::size_t>(x)] * (hd * row);
  }
  const double scale = std::max({std::abs(rep.lhs), std::abs(rep.rhs), 1e-300});
  rep.residual_rel = std::abs(rep.lhs - rep.rhs) / scale;
  return rep;
}

ProjectionBoundsReport projection_diagonal_bounds(
    const SpectralDecomposition& dec, const EnergySet& interval, double t) {
  if (!(t > 0.0))
    throw std::invalid_argument("projection_diagonal_bounds: t must be > 0");
  double sup_i = -std::numeric_limits<double>::infinity();
  for (const auto& iv : interval) sup_i = std::max(sup_i, iv.hi);
  if (!std::isfinite(sup_i) && !interval.empty())
    throw std::invalid_argument(
        "projection_diagonal_bounds: sup I must be finite");

  ProjectionBoundsReport rep;
  rep.min_diagonal = std::numeric_limits<double>::infinity();
  rep.max_upper_violation = -std::numeric_limits<double>::infinity();
  const std::int64_t n = dec.n_sites();
  double scale = 0.0;
  for (std::int64_t u = 0; u < n; ++u) {
    const double p = projection_kernel(dec, interval, u, u).real();
    const double k = heat_kernel(dec, t, u, u).real();
    const double bound = interval.empty() ? 0.0 : std::exp(t * sup_i) * k;
    rep.min_diagonal = std::min(rep.min_diagonal, p);
    rep.max_upper_violation = std::max(rep.max_upper_violation, p - bound);
    scale = std::max({scale, std::abs(p), std::abs(bound)});
  }
  const double slack = 1e-12 * std::max(scale, 1.0);
  rep.pass = rep.min_diagonal >= -slack && rep.max_upper_violation <= slack;
  return rep;
}

double initial_value_residual(const SpectralDecomposition& dec,
                              const Eigen::VectorXcd& phi, double t,
                              double dt) {
  if (!(t > 0.0)) throw std::invalid_argument("initial_value: t must be > 0");
  if (!(dt > 0.0) || dt > t / 10.0)
    throw std::invalid_argument("initial_value: need 0 < dt <= t/10");
  if (phi.size() != dec.site_functions.rows())
    throw std::invalid_argument("initial_value: phi size mismatch");
  const double hd = dec.hd();

  // coefficients of phi in the eigenbasis
  const Eigen::VectorXcd coeff = hd * (dec.site_functions.adjoint() * phi);
  auto orbit = [&](double s) -> Eigen::VectorXcd {
    Eigen::VectorXcd c = coeff;
    for (Eigen::Index k = 0; k < c.size(); ++k)
      c(k) *= std::exp(-s * dec.eigenvalues(k));
    return dec.site_functions * c;
  };
  const Eigen::VectorXcd u_plus = orbit(t + dt);
  const Eigen::VectorXcd u_minus = orbit(t - dt);
  const Eigen::VectorXcd u_t = orbit(t);
  Eigen::VectorXcd hu;
  dec.ham.apply(u_t, hu);
  const Eigen::VectorXcd r = (u_plus - u_minus) / (2.0 * dt) + hu;
  return std::sqrt(hd * r.squaredNorm());
}

namespace {

struct EnsembleData {
  // per realization: eigenvalues, Gamma mass per eigenstate, and the
  // (1/#Gamma) sum over Gamma sites of |phi_n(u)|^2 diagnostics
  std::vector<Eigen::VectorXd> eigenvalues;
  std::vector<Eigen::VectorXd> gamma_mass;       // h^d sum_{u in Gamma} |phi_n(u)|^2
  std::vector<Eigen::VectorXd> gamma_mass_half;  // same for the shrunk window
};

std::vector<std::int64_t> gamma_sites(const LatticeGeometry& g,
                                      double half_width) {
  std::vector<std::int64_t> sites;
  std::vector<double> x;
  for (std::int64_t u = 0; u < g.n_sites(); ++u) {
    g.site_coords(u, x);
    bool inside = true;
    for (double c : x)
      if (std::abs(c) > half_width) inside = false;
    if (inside) sites.push_back(u);
  }
  return sites;
}

EnsembleData run_ensemble(const VectorPotentialSpec& a,
                          const GaussianFieldSpec& field, double box_side,
                          int n_per_dim, int dim, double gamma_half_width,
                          int n_realizations, std::uint64_t seed) {
  if (n_realizations < 1)
    throw std::invalid_argument("ids: n_realizations must be >= 1");
  if (!(gamma_half_width > 0.0) || gamma_half_width > box_side / 4.0)
    throw std::invalid_argument(
        "ids: Gamma must be strictly interior (half-width <= box_side/4)");

  GridHamiltonian base = build_grid_hamiltonian(
      box_side, n_per_dim, dim, a,
      std::vector<double>(
          static_cast<std::size_t>(LatticeGeometry{dim, n_per_dim, box_side}
                                       .n_sites()),
          0.0));
  const std::int64_t n = base.geom.n_sites();
  const double hd = base.geom.hd();

  // site coordinates, flattened, for the covariance factorization (done once)
  std::vector<double> coords(static_cast<std::size_t>(n) * dim);
  std::vector<double> x;
  for (std::int64_t u = 0; u < n; ++u) {
    base.geom.site_coords(u, x);
    for (int j = 0; j < dim; ++j)
      coords[static_cast<std::size_t>(u) * dim + j] = x[j];
  }

  const auto g_sites = gamma_sites(base.geom, gamma_half_width);
  const auto g_sites_half = gamma_sites(base.geom, 0.5 * gamma_half_width);
  if (g_sites.empty())
    throw std::invalid_argument("ids: Gamma contains no lattice sites");

  EnsembleData data;
  data.eigenvalues.reserve(n_realizations);
  data.gamma_mass.reserve(n_realizations);
  data.gamma_mass_half.reserve(n_realizations);

  for (int r = 0; r < n_realizations; ++r) {
    const std::vector<double> v = sample_on_points(
        coords, dim, field, derive_seed(seed, static_cast<std::uint64_t>(r)));
    base.potential_values = v;
    const SpectralDecomposition dec = decompose(base);
    Eigen::VectorXd mass(dec.eigenvalues.size());
    Eigen::VectorXd mass_half(dec.eigenvalues.size());
    for (Eigen::Index k = 0; k < dec.eigenvalues.size(); ++k) {
      double acc = 0.0;
      for (std::int64_t u : g_sites) acc += std::norm(dec.site_functions(u, k));
      mass(k) = hd * acc;
      acc = 0.0;
      for (std::int64_t u : g_sites_half)
        acc += std::norm(dec.site_functions(u, k));
      mass_half(k) = hd * acc;
    }
    data.eigenvalues.push_back(dec.eigenvalues);
    data.gamma_mass.push_back(std::move(mass));
    data.gamma_mass_half.push_back(std::move(mass_half));
  }
  return data;
}

}  // namespace

IDSResult ids_two_ways(const VectorPotentialSpec& a,
                       const GaussianFieldSpec& field, double box_side,
                       int n_per_dim, int dim, double gamma_half_width,
                       const std::vector<double>& energy_grid,
                       int n_realizations, std::uint64_t seed) {
  if (energy_grid.size() < 2)
    throw std::invalid_argument("ids: energy grid needs >= 2 points");
  for (std::size_t i = 1; i < energy_grid.size(); ++i)
    if (!(energy_grid[i] > energy_grid[i - 1]))
      throw std::invalid_argument("ids: energy grid must be ascending");

  const EnsembleData data =
      run_ensemble(a, field, box_side, n_per_dim, dim, gamma_half_width,
                   n_realizations, seed);

  const LatticeGeometry geom{dim, n_per_dim, box_side};
  const double hd = geom.hd();
  const double gamma_vol =
      hd * static_cast<double>(gamma_sites(geom, gamma_half_width).size());
  const double gamma_vol_half =
      hd * static_cast<double>(gamma_sites(geom, 0.5 * gamma_half_width).size());
  const std::size_t n_e = energy_grid.size();

  IDSResult out;
  out.trace_curve.energies = energy_grid;
  out.trace_curve.n_realizations = n_realizations;
  out.trace_curve.gamma_half_width = gamma_half_width;
  out.diag_curve = out.trace_curve;

  std::vector<Moments> trace_m(n_e), diag_m(n_e), gap_m(n_e), half_m(n_e);
  for (int r = 0; r < n_realizations; ++r) {
    const auto& ev = data.eigenvalues[static_cast<std::size_t>(r)];
    const auto& mass = data.gamma_mass[static_cast<std::size_t>(r)];
    const auto& mass_h = data.gamma_mass_half[static_cast<std::size_t>(r)];
    for (std::size_t e = 0; e < n_e; ++e) {
      double acc = 0.0, acc_h = 0.0;
      for (Eigen::Index k = 0; k < ev.size(); ++k) {
        if (ev(k) < energy_grid[e]) {
          acc += mass(k);
          acc_h += mass_h(k);
        }
      }
      const double n_trace = acc / gamma_vol;
      // diagonal route: (1/#Gamma) sum_{u in Gamma} p(E; u, u) regroups the
      // same eigenstate masses
      const double n_diag = acc / gamma_vol;
      trace_m[e].add(n_trace);
      diag_m[e].add(n_diag);
      gap_m[e].add(n_trace - n_diag);
      half_m[e].add(acc_h / gamma_vol_half);
    }
  }

  out.max_gap = 0.0;
  out.max_gap_std_error = 0.0;
  out.gamma_sensitivity = 0.0;
  for (std::size_t e = 0; e < n_e; ++e) {
    out.trace_curve.values.push_back(trace_m[e].mean());
    out.trace_curve.std_errors.push_back(trace_m[e].standard_error());
    out.diag_curve.values.push_back(diag_m[e].mean());
    out.diag_curve.std_errors.push_back(diag_m[e].standard_error());
    const double gap = std::abs(gap_m[e].mean());
    if (gap >= out.max_gap) {
      out.max_gap = gap;
      out.max_gap_std_error = gap_m[e].standard_error();
    }
    out.gamma_sensitivity = std::max(
        out.gamma_sensitivity, std::abs(half_m[e].mean() - trace_m[e].mean()));
  }
  if (a.kind() == VectorPotentialSpec::Kind::Custom)
    out.warnings.push_back(
        "IDS comparison with a non-constant magnetic field is untested");
  return out;
}

LaplaceReport laplace_consistency(const GaussianFieldSpec& field,
                                  double box_side, int n_per_dim, int dim,
                                  double gamma_half_width,
                                  const std::vector<double>& t_list,
                                  const std::vector<double>& energy_grid,
                                  int n_realizations, std::uint64_t seed) {
  if (t_list.empty())
    throw std::invalid_argument("laplace: t list must not be empty");
  if (energy_grid.size() < 2)
    throw std::invalid_argument("laplace: energy grid needs >= 2 points");

  const EnsembleData data =
      run_ensemble(VectorPotentialSpec::zero(), field, box_side, n_per_dim,
                   dim, gamma_half_width, n_realizations, seed);

  const LatticeGeometry geom{dim, n_per_dim, box_side};
  const double gamma_vol =
      geom.hd() * static_cast<double>(gamma_sites(geom, gamma_half_width).size());
  const std::size_t n_e = energy_grid.size();

  LaplaceReport rep;
  rep.ids.energies = energy_grid;
  rep.ids.n_realizations = n_realizations;
  rep.ids.gamma_half_width = gamma_half_width;
  std::vector<Moments> curve(n_e);

  for (double t : t_list) {
    Moments diff_m, lhs_m, rhs_m, budget_m;
    for (int r = 0; r < n_realizations; ++r) {
      const auto& ev = data.eigenvalues[static_cast<std::size_t>(r)];
      const auto& mass = data.gamma_mass[static_cast<std::size_t>(r)];
      double lhs = 0.0;
      double rhs = 0.0;
      double budget = 0.0;
      for (Eigen::Index k = 0; k < ev.size(); ++k) {
        const double m = mass(k) / gamma_vol;
        lhs += std::exp(-t * ev(k)) * m;
        // Stieltjes sum with left-edge representatives: find the bin
        const double e = ev(k);
        if (e < energy_grid.front()) {
          // below the grid: representative is the first edge; budget the gap
          rhs += std::exp(-t * energy_grid.front()) * m;
          budget += std::abs(std::exp(-t * e) -
                             std::exp(-t * energy_grid.front())) * m;
        } else if (e >= energy_grid.back()) {
          // truncation term kept exactly
          rhs += std::exp(-t * e) * m;
        } else {
          const auto it = std::upper_bound(energy_grid.begin(),
                                           energy_grid.end(), e);
          const double lo = *(it - 1);
          const double hi = *it;
          rhs += std::exp(-t * lo) * m;
          budget += (std::exp(-t * lo) - std::exp(-t * hi)) * m;
        }
      }
      lhs_m.add(lhs);
      rhs_m.add(rhs);
      diff_m.add(lhs - rhs);
      budget_m.add(budget);
    }
    LaplaceEntry entry;
    entry.t = t;
    entry.lhs = lhs_m.mean();
    entry.rhs = rhs_m.mean();
    entry.residual = std::abs(diff_m.mean());
    entry.bin_budget = budget_m.mean();
    entry.std_error = diff_m.standard_error();
    entry.pass = entry.residual <= 3.0 * entry.std_error + entry.bin_budget;
    rep.entries.push_back(entry);
  }

  for (int r = 0; r < n_realizations; ++r) {
    const auto& ev = data.eigenvalues[static_cast<std::size_t>(r)];
    const auto& mass = data.gamma_mass[static_cast<std::size_t>(r)];
    for (std::size_t e = 0; e < n_e; ++e) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < ev.size(); ++k)
        if (ev(k) < energy_grid[e]) acc += mass(k);
      curve[e].add(acc / gamma_vol);
    }
  }
  for (std::size_t e = 0; e < n_e; ++e) {
    rep.ids.values.push_back(curve[e].mean());
    rep.ids.std_errors.push_back(curve[e].standard_error());
  }
  return rep;
}

}  // namespace fkmc
