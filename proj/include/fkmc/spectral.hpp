#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fkmc/potentials.hpp"
#include "fkmc/random_fields.hpp"

namespace fkmc {

/// Interior sites of the centered cube of side `box_side` with spacing
/// h = box_side / n_per_dim and Dirichlet walls at the cube faces:
/// per axis the coordinates are -L/2 + (i+1) h for i = 0 .. n_per_dim-2.
struct LatticeGeometry {
  int dim = 1;
  int n_per_dim = 2;
  double box_side = 1.0;

  double h() const { return box_side / n_per_dim; }
  int sites_per_axis() const { return n_per_dim - 1; }
  std::int64_t n_sites() const {
    std::int64_t n = 1;
    for (int j = 0; j < dim; ++j) n *= sites_per_axis();
    return n;
  }
  double hd() const {
    double v = 1.0;
    for (int j = 0; j < dim; ++j) v *= h();
    return v;
  }
  double axis_coord(int i) const { return -0.5 * box_side + (i + 1) * h(); }
  void site_coords(std::int64_t site, std::vector<double>& out) const;
  std::int64_t site_index(const std::vector<int>& multi) const;
  /// Flat index of the site closest to x.
  std::int64_t nearest_site(std::span<const double> x) const;
};

/// Lattice discretization of H(A,V) = 1/2 sum_j (i d_j + A_j)^2 + V with
/// Peierls link phases e^{-i h A(midpoint) . e_j} on nearest-neighbor links
/// and Dirichlet boundaries. Kinetic diagonal d/h^2, hopping -phase/(2h^2).
struct GridHamiltonian {
  LatticeGeometry geom;
  std::vector<double> potential_values;            // per site
  std::vector<std::complex<double>> link_phases;   // site-major, +e_j links
  bool real_valued = true;                         // true iff A = 0

  std::complex<double> link(std::int64_t site, int j) const {
    return link_phases[static_cast<std::size_t>(site) * geom.dim + j];
  }
  Eigen::MatrixXcd assemble() const;
  /// H * psi through the stencil, no matrix materialization.
  void apply(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const;
  /// Product of link phases around the (j,k) plaquette with lower-left
  /// corner `site`, traversed counterclockwise (+e_j, +e_k, -e_j, -e_k).
  std::complex<double> plaquette(std::int64_t site, int j, int k) const;
};

inline constexpr std::int64_t kMaxSites = 8192;

GridHamiltonian build_grid_hamiltonian(double box_side, int n_per_dim, int dim,
                                       const VectorPotentialSpec& a,
                                       const ScalarPotentialSpec& v);
GridHamiltonian build_grid_hamiltonian(double box_side, int n_per_dim, int dim,
                                       const VectorPotentialSpec& a,
                                       const std::vector<double>& site_potential);

/// Multiplies every link phase by e^{-i (chi_v - chi_u)}; a pure lattice
/// gauge transformation, unitarily equivalent to the original operator.
GridHamiltonian gauge_transform(const GridHamiltonian& ham,
                                const std::vector<double>& chi);

/// Site index / value and link index / phase rows in plain text.
void dump_text(const GridHamiltonian& ham, std::ostream& os);

/// Full dense eigensystem. Eigenvalues ascend; the stored site functions
/// phi_n satisfy h^d sum_sites |phi_n|^2 = 1.
struct SpectralDecomposition {
  GridHamiltonian ham;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXcd site_functions;  // column n = phi_n

  double hd() const { return ham.geom.hd(); }
  std::int64_t n_sites() const { return ham.geom.n_sites(); }
  /// || H phi_n - E_n phi_n ||_2 with the h^d-weighted norm.
  double eigen_residual(int n) const;
};

SpectralDecomposition decompose(const GridHamiltonian& ham);

/// Half-open energy interval [lo, hi); membership uses exact floating
/// comparison, so a degenerate eigenvalue sitting at lo is included and one
/// at hi is not (the left-continuous ]-inf, E[ convention maps to strict
/// inequality at E).
struct EnergyInterval {
  double lo;
  double hi;
};
using EnergySet = std::vector<EnergyInterval>;

bool energy_set_contains(const EnergySet& set, double e);

/// k_t(x,y) = sum_n e^{-t E_n} phi_n(x) phi_n*(y).
std::complex<double> heat_kernel(const SpectralDecomposition& dec, double t,
                                 std::int64_t x_site, std::int64_t y_site);

/// p_I(x,y) = sum_{E_n in I} phi_n(x) phi_n*(y).
std::complex<double> projection_kernel(const SpectralDecomposition& dec,
                                       const EnergySet& interval,
                                       std::int64_t x_site,
                                       std::int64_t y_site);

/// Functional-calculus kernel computed along two routes: the direct
/// eigen-sum sum_n F(E_n) phi_n(x) phi_n*(y) and the composed form
/// <k_t(.,x), e^{2tH} F(H) k_t(.,y)> with lattice heat kernels as the
/// vectors, evaluated at two admissible t values (t_check and t_check/2).
struct BoundedFunctionReport {
  std::complex<double> direct{0.0, 0.0};
  std::complex<double> composed_t1{0.0, 0.0};
  std::complex<double> composed_t2{0.0, 0.0};
  double t1 = 0.0, t2 = 0.0;
  double max_rel_gap = 0.0;  // across the three values
};

BoundedFunctionReport bounded_function_kernel(
    const SpectralDecomposition& dec, const std::function<double(double)>& f,
    double gamma, double tau, std::int64_t x_site, std::int64_t y_site,
    double t_check);

struct TraceCheckReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual_rel = 0.0;
};

/// Trace[w* Chi_I(H) w] as an eigenstate sum against the diagonal-kernel
/// integral sum_x |w(x)|^2 p_I(x,x) h^d.
TraceCheckReport trace_formula_check(const SpectralDecomposition& dec,
                                     const EnergySet& interval,
                                     const std::vector<double>& w);

/// ||F(H) w||_HS^2 two ways: eigenstate sum against
/// sum_x |w(x)|^2 sum_y |f(x,y)|^2 h^{2d} with the materialized kernel f.
TraceCheckReport hs_norm_check(const SpectralDecomposition& dec,
                               const std::function<double(double)>& f,
                               const std::vector<double>& w);

struct ProjectionBoundsReport {
  double min_diagonal = 0.0;
  double max_upper_violation = 0.0;  // max over sites of p - e^{t sup I} k_t
  bool pass = false;
};

/// 0 <= p_I(x,x) <= e^{t sup I} k_t(x,x) at every site, slack 1e-12 * scale.
ProjectionBoundsReport projection_diagonal_bounds(
    const SpectralDecomposition& dec, const EnergySet& interval, double t);

/// || (u(t+dt) - u(t-dt)) / (2 dt) + H u(t) ||_2 for the semigroup orbit
/// u(s) = sum_n e^{-s E_n} <phi_n, phi> phi_n; H is applied through the
/// stencil, independent of the eigen-route.
double initial_value_residual(const SpectralDecomposition& dec,
                              const Eigen::VectorXcd& phi, double t,
                              double dt);

struct IDSCurve {
  std::vector<double> energies;
  std::vector<double> values;
  std::vector<double> std_errors;
  int n_realizations = 0;
  double gamma_half_width = 0.0;  // observation window used
};

struct IDSResult {
  IDSCurve trace_curve;  // Gamma-localized trace per volume
  IDSCurve diag_curve;   // realization- and Gamma-site-averaged diagonal
  double max_gap = 0.0;
  double max_gap_std_error = 0.0;
  double gamma_sensitivity = 0.0;  // max shift when Gamma shrinks by half
  std::vector<std::string> warnings;
};

/// Integrated density of states both ways: the Gamma-localized trace per
/// volume and the disorder-averaged projection diagonal averaged over the
/// sites of Gamma (the lattice stand-in for homogeneity). Field
/// realizations are sampled exactly on the lattice sites via the covariance
/// matrix; both curves use the same ensemble.
IDSResult ids_two_ways(const VectorPotentialSpec& a,
                       const GaussianFieldSpec& field, double box_side,
                       int n_per_dim, int dim, double gamma_half_width,
                       const std::vector<double>& energy_grid,
                       int n_realizations, std::uint64_t seed);

struct LaplaceEntry {
  double t = 0.0;
  double lhs = 0.0;       // E[Gamma-averaged heat-kernel diagonal]
  double rhs = 0.0;       // Stieltjes sum over the N(E) grid
  double residual = 0.0;
  double bin_budget = 0.0;  // exact in-bin variation of e^{-tE}
  double std_error = 0.0;   // realization spread of lhs - rhs
  bool pass = false;        // residual <= 3 std_error + bin_budget
};

struct LaplaceReport {
  std::vector<LaplaceEntry> entries;
  IDSCurve ids;
};

/// Two-sided Laplace transform of the IDS against the disorder-averaged
/// heat-kernel diagonal, per realization on a shared ensemble (A = 0).
LaplaceReport laplace_consistency(const GaussianFieldSpec& field,
                                  double box_side, int n_per_dim, int dim,
                                  double gamma_half_width,
                                  const std::vector<double>& t_list,
                                  const std::vector<double>& energy_grid,
                                  int n_realizations, std::uint64_t seed);

}  // namespace fkmc
