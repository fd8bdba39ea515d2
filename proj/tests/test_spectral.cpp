#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fkmc/closed_forms.hpp"
#include "fkmc/spectral.hpp"

using namespace fkmc;

namespace {

VectorPotentialSpec landau_gauge(double b) {
  return poincare_gauge({0.0, b, -b, 0.0}, 2);
}

EnergySet below(double e) {
  return {{-std::numeric_limits<double>::infinity(), e}};
}

}  // namespace

TEST_CASE("free 1d stencil is the classic tridiagonal matrix") {
  // box of side 4 with spacing 1: three interior sites, Dirichlet walls
  const auto ham = build_grid_hamiltonian(4.0, 4, 1, VectorPotentialSpec::zero(),
                                          scalar_zero());
  CHECK(ham.geom.h() == 1.0);
  CHECK(ham.geom.n_sites() == 3);
  const Eigen::MatrixXcd m = ham.assemble();
  CHECK(m(0, 0) == std::complex<double>(1.0, 0.0));
  CHECK(m(1, 1) == std::complex<double>(1.0, 0.0));
  CHECK(m(0, 1) == std::complex<double>(-0.5, 0.0));
  CHECK(m(1, 0) == std::complex<double>(-0.5, 0.0));
  CHECK(m(0, 2) == std::complex<double>(0.0, 0.0));
  CHECK(m.imag().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("site cap and argument validation") {
  CHECK_THROWS_AS(build_grid_hamiltonian(1.0, 200, 2,
                                         VectorPotentialSpec::zero(),
                                         scalar_zero()),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_grid_hamiltonian(-1.0, 8, 1,
                                         VectorPotentialSpec::zero(),
                                         scalar_zero()),
                  std::invalid_argument);
}

TEST_CASE("plaquette phases carry the constant-field flux") {
  const double b = 0.7;
  const auto ham = build_grid_hamiltonian(8.0, 16, 2, landau_gauge(b),
                                          scalar_zero());
  const double h2 = ham.geom.h() * ham.geom.h();
  const std::complex<double> expected{std::cos(b * h2), -std::sin(b * h2)};
  const int m = ham.geom.sites_per_axis();
  for (std::int64_t site : {std::int64_t(0), std::int64_t(m + 3),
                            std::int64_t(5 * m + 7)}) {
    CHECK(std::abs(ham.plaquette(site, 0, 1) - expected) <= 1e-12);
  }
}

TEST_CASE("assembled matrix is hermitian and eigenpairs are tight") {
  const auto ham = build_grid_hamiltonian(10.0, 24, 2, landau_gauge(1.0),
                                          scalar_harmonic({0.3, 0.3}));
  const Eigen::MatrixXcd m = ham.assemble();
  const double scale = m.cwiseAbs().maxCoeff();
  CHECK((m - m.adjoint()).cwiseAbs().maxCoeff() <= 1e-12 * scale);

  const auto dec = decompose(ham);
  const std::int64_t n = dec.n_sites();
  const double e_scale = std::max(std::abs(dec.eigenvalues(0)),
                                  std::abs(dec.eigenvalues(n - 1)));
  for (int k = 0; k < n; k += 37)
    CHECK(dec.eigen_residual(k) <= 1e-8 * e_scale);
  for (int k = 1; k < n; ++k)
    CHECK(dec.eigenvalues(k) >= dec.eigenvalues(k - 1));
  const Eigen::MatrixXcd gram =
      dec.hd() * (dec.site_functions.adjoint() * dec.site_functions);
  CHECK((gram - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff() <=
        1e-10);
}

TEST_CASE("eigenvector completeness: sum_n |phi_n(x)|^2 = 1/h^d") {
  const auto ham = build_grid_hamiltonian(12.0, 24, 1,
                                          VectorPotentialSpec::zero(),
                                          scalar_harmonic({1.0}));
  const auto dec = decompose(ham);
  const double inv_hd = 1.0 / dec.hd();
  for (std::int64_t u = 0; u < dec.n_sites(); u += 5) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < dec.eigenvalues.size(); ++k)
      acc += std::norm(dec.site_functions(u, k));
    CHECK(acc == doctest::Approx(inv_hd).epsilon(1e-10));
  }
}

TEST_CASE("free heat kernel on a large box approaches the continuum value") {
  const auto ham = build_grid_hamiltonian(24.0, 96, 1,
                                          VectorPotentialSpec::zero(),
                                          scalar_zero());
  const auto dec = decompose(ham);
  const std::int64_t center = ham.geom.nearest_site(std::vector<double>{0.0});
  const double k = heat_kernel(dec, 1.0, center, center).real();
  const double expected = 1.0 / std::sqrt(2.0 * M_PI);
  CHECK(std::abs(k - expected) <= 0.02 * expected);
}

TEST_CASE("harmonic heat kernel matches Mehler within 1%") {
  const auto ham = build_grid_hamiltonian(16.0, 128, 1,
                                          VectorPotentialSpec::zero(),
                                          scalar_harmonic({1.0}));
  const auto dec = decompose(ham);
  const std::int64_t center = ham.geom.nearest_site(std::vector<double>{0.0});
  CHECK(ham.geom.axis_coord(63) == doctest::Approx(0.0).epsilon(1e-14));
  const double k = heat_kernel(dec, 1.0, center, center).real();
  const double expected = mehler_kernel(0.0, 0.0, 1.0, 1.0);
  CHECK(std::abs(k - expected) <= 0.01 * expected);
}

TEST_CASE("landau lattice diagonal converges at O(h^2) to the closed form") {
  // spacings h and h/2; the Peierls error is quadratic, so the halved grid
  // must shrink the defect by about four
  const auto value = [&](int n_per_dim) {
    const auto ham = build_grid_hamiltonian(12.0, n_per_dim, 2,
                                            landau_gauge(1.0), scalar_zero());
    const auto dec = decompose(ham);
    const std::int64_t center =
        ham.geom.nearest_site(std::vector<double>{0.0, 0.0});
    return heat_kernel(dec, 1.0, center, center).real();
  };
  const double coarse = value(16);
  const double fine = value(32);
  const double exact = landau_diagonal(1.0, 1.0);
  CHECK(std::abs(fine - exact) <= 0.06 * exact);
  const double ratio = std::abs(fine - exact) / std::abs(coarse - exact);
  CHECK(ratio >= 0.15);
  CHECK(ratio <= 0.4);
}

TEST_CASE("projection kernels") {
  const auto ham = build_grid_hamiltonian(12.0, 32, 1,
                                          VectorPotentialSpec::zero(),
                                          scalar_harmonic({1.0}));
  const auto dec = decompose(ham);
  const std::int64_t n = dec.n_sites();

  SUBCASE("full spectrum reproduces the lattice delta") {
    const EnergySet all = below(dec.eigenvalues(n - 1) + 1.0);
    const double inv_hd = 1.0 / dec.hd();
    CHECK(projection_kernel(dec, all, 3, 3).real() ==
          doctest::Approx(inv_hd).epsilon(1e-10));
    CHECK(std::abs(projection_kernel(dec, all, 3, 7)) <= 1e-10 * inv_hd);
  }

  SUBCASE("interval below the spectrum gives zero") {
    const EnergySet none = below(dec.eigenvalues(0) - 1.0);
    CHECK(projection_kernel(dec, none, 5, 5) == std::complex<double>(0.0, 0.0));
  }

  SUBCASE("ground-state window isolates |phi_0|^2") {
    const EnergySet ground = below(0.5 * (dec.eigenvalues(0) +
                                          dec.eigenvalues(1)));
    for (std::int64_t u = 0; u < n; u += 7)
      CHECK(projection_kernel(dec, ground, u, u).real() ==
            doctest::Approx(std::norm(dec.site_functions(u, 0)))
                .epsilon(1e-12));
  }

  SUBCASE("half-open membership: eigenvalue at the upper edge is excluded") {
    const double e1 = dec.eigenvalues(1);
    const EnergySet upto = below(e1);  // [ -inf, E_1 )
    double acc = 0.0;
    for (std::int64_t u = 0; u < n; ++u)
      acc += projection_kernel(dec, upto, u, u).real() * dec.hd();
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-10));  // only the ground state
    const EnergySet closed{{e1, e1 + 1e-9}};  // [E_1, ...) includes it
    double acc2 = 0.0;
    for (std::int64_t u = 0; u < n; ++u)
      acc2 += projection_kernel(dec, closed, u, u).real() * dec.hd();
    CHECK(acc2 == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("functional calculus kernels") {
  const auto ham = build_grid_hamiltonian(14.0, 40, 1,
                                          VectorPotentialSpec::zero(),
                                          scalar_harmonic({1.0}));
  const auto dec = decompose(ham);
  const std::int64_t x = ham.geom.nearest_site(std::vector<double>{0.0});
  const std::int64_t y = ham.geom.nearest_site(std::vector<double>{1.0});

  SUBCASE("F = e^{-sE} reproduces the heat kernel") {
    const double s = 0.8;
    const auto f = [s](double e) { return std::exp(-s * e); };
    const auto rep = bounded_function_kernel(dec, f, 1.0, s, x, y, 0.3 * s);
    CHECK(std::abs(rep.direct - heat_kernel(dec, s, x, y)) <= 1e-10);
    CHECK(rep.max_rel_gap <= 1e-8);
  }

  SUBCASE("F = indicator reproduces the projection kernel") {
    const double cut = dec.eigenvalues(10);
    const auto f = [cut](double e) { return e < cut ? 1.0 : 0.0; };
    const auto rep = bounded_function_kernel(dec, f, 1.0, 1.0, x, y, 0.2);
    CHECK(std::abs(rep.direct - projection_kernel(dec, below(cut), x, y)) <=
          1e-10);
  }

  SUBCASE("two t_check values agree to 1e-8 relative") {
    const auto f = [](double e) { return std::min(1.0, std::exp(-e)); };
    const auto rep = bounded_function_kernel(dec, f, 1.0, 1.0, x, y, 0.4);
    CHECK(rep.max_rel_gap <= 1e-8);
  }

  SUBCASE("t_check outside ]0, tau/2[ rejected") {
    const auto f = [](double e) { return std::min(1.0, std::exp(-e)); };
    CHECK_THROWS_AS(bounded_function_kernel(dec, f, 1.0, 1.0, x, y, 0.6),
                    std::invalid_argument);
  }
}

TEST_CASE("trace and Hilbert-Schmidt identities") {
  const auto ham = build_grid_hamiltonian(14.0, 40, 1,
                                          VectorPotentialSpec::zero(),
                                          scalar_harmonic({1.0}));
  const auto dec = decompose(ham);
  const std::int64_t n = dec.n_sites();
  const EnergySet half = below(dec.eigenvalues(n / 2));

  SUBCASE("w = 0 vanishes") {
    const std::vector<double> w(n, 0.0);
    const auto rep = trace_formula_check(dec, half, w);
    CHECK(rep.lhs == 0.0);
    CHECK(rep.rhs == 0.0);
  }

  SUBCASE("w = 1 over the full spectrum counts the states") {
    const std::vector<double> w(n, 1.0);
    const EnergySet all = below(dec.eigenvalues(n - 1) + 1.0);
    const auto rep = trace_formula_check(dec, all, w);
    CHECK(rep.lhs == doctest::Approx(static_cast<double>(n)).epsilon(1e-10));
    CHECK(rep.residual_rel <= 1e-10);
  }

  SUBCASE("random weight") {
    std::vector<double> w(n);
    CounterRng rng(3, RngStream::SiteWeights, 0);
    for (auto& wi : w) wi = 2.0 * rng.uniform() - 1.0;
    CHECK(trace_formula_check(dec, half, w).residual_rel <= 1e-10);
    const auto f = [](double e) { return std::min(1.0, std::exp(-e)); };
    CHECK(hs_norm_check(dec, f, w).residual_rel <= 1e-10);
  }

  SUBCASE("F as an indicator collapses HS to the trace identity") {
    std::vector<double> w(n);
    CounterRng rng(4, RngStream::SiteWeights, 0);
    for (auto& wi : w) wi = rng.uniform();
    const double cut = dec.eigenvalues(n / 2);
    const auto f = [cut](double e) { return e < cut ? 1.0 : 0.0; };
    const auto hs = hs_norm_check(dec, f, w);
    const auto tr = trace_formula_check(dec, below(cut), w);
    CHECK(hs.lhs == doctest::Approx(tr.lhs).epsilon(1e-12));
  }

  SUBCASE("F = 0 gives zero HS norm") {
    std::vector<double> w(n, 1.0);
    const auto hs = hs_norm_check(dec, [](double) { return 0.0; }, w);
    CHECK(hs.lhs == 0.0);
    CHECK(hs.rhs == 0.0);
  }
}

TEST_CASE("projection diagonal bounds") {
  const auto ham = build_grid_hamiltonian(14.0, 40, 1,
                                          VectorPotentialSpec::zero(),
                                          scalar_harmonic({1.0}));
  const auto dec = decompose(ham);

  SUBCASE("empty interval is trivially bounded") {
    const auto rep = projection_diagonal_bounds(dec, {}, 1.0);
    CHECK(rep.pass);
    CHECK(rep.min_diagonal == 0.0);
  }

  SUBCASE("low-energy window at t = 1") {
    const auto rep = projection_diagonal_bounds(dec, below(1.0), 1.0);
    CHECK(rep.pass);
  }

  SUBCASE("full spectrum window") {
    const double top = dec.eigenvalues(dec.n_sites() - 1);
    const auto rep = projection_diagonal_bounds(dec, below(top + 1.0), 0.01);
    CHECK(rep.pass);
  }
}

TEST_CASE("initial value problem") {
  const auto ham = build_grid_hamiltonian(14.0, 40, 1,
                                          VectorPotentialSpec::zero(),
                                          scalar_harmonic({1.0}));
  const auto dec = decompose(ham);
  const std::int64_t n = dec.n_sites();

  SUBCASE("eigenvector reduces to the scalar central-difference error") {
    const int mode = 2;
    const Eigen::VectorXcd phi = dec.site_functions.col(mode);
    const double t = 1.0, dt = 0.05;
    const double e = dec.eigenvalues(mode);
    const double expected =
        std::abs(e * std::exp(-t * e) *
                 (std::sinh(e * dt) / (e * dt) - 1.0));
    const double r = initial_value_residual(dec, phi, t, dt);
    CHECK(r == doctest::Approx(expected).epsilon(1e-6));
  }

  SUBCASE("halving dt divides the residual by about four") {
    Eigen::VectorXcd phi(n);
    std::vector<double> x;
    for (std::int64_t u = 0; u < n; ++u) {
      ham.geom.site_coords(u, x);
      phi(u) = std::exp(-x[0] * x[0]);
    }
    const double r1 = initial_value_residual(dec, phi, 1.0, 0.05);
    const double r2 = initial_value_residual(dec, phi, 1.0, 0.025);
    CHECK(r2 / r1 >= 0.2);
    CHECK(r2 / r1 <= 0.35);
  }

  SUBCASE("large t kills the residual") {
    Eigen::VectorXcd phi(n);
    std::vector<double> x;
    for (std::int64_t u = 0; u < n; ++u) {
      ham.geom.site_coords(u, x);
      phi(u) = std::exp(-x[0] * x[0]);
    }
    CHECK(initial_value_residual(dec, phi, 40.0, 1.0) <= 1e-8);
  }

  SUBCASE("dt larger than t/10 rejected") {
    Eigen::VectorXcd phi = Eigen::VectorXcd::Ones(n);
    CHECK_THROWS_AS(initial_value_residual(dec, phi, 1.0, 0.5),
                    std::invalid_argument);
  }
}

TEST_CASE("gauge transformation leaves the spectrum unchanged") {
  const auto ham = build_grid_hamiltonian(10.0, 20, 2, landau_gauge(0.8),
                                          scalar_harmonic({0.2, 0.2}));
  const auto dec = decompose(ham);
  std::vector<double> chi(static_cast<std::size_t>(ham.geom.n_sites()));
  CounterRng rng(7, RngStream::SiteWeights, 0);
  for (auto& c : chi) c = 6.28 * rng.uniform();
  const auto dec2 = decompose(gauge_transform(ham, chi));
  const double scale = std::max(1.0, std::abs(dec.eigenvalues(
                                        dec.eigenvalues.size() - 1)));
  CHECK((dec.eigenvalues - dec2.eigenvalues).cwiseAbs().maxCoeff() <=
        1e-10 * scale);
}

TEST_CASE("hamiltonian text dump") {
  const auto ham = build_grid_hamiltonian(4.0, 4, 1,
                                          VectorPotentialSpec::zero(),
                                          scalar_constant(2.0));
  std::ostringstream os;
  dump_text(ham, os);
  const std::string dump = os.str();
  CHECK(dump.find("site 0 -1 2\n") != std::string::npos);
  CHECK(dump.find("link 0 0 1 0\n") != std::string::npos);
}

TEST_CASE("ids two ways") {
  const auto field = GaussianFieldSpec::squared_exponential(0.5, 1.0);
  std::vector<double> grid;
  for (int i = 0; i < 30; ++i) grid.push_back(-2.0 + 14.0 * i / 29.0);

  SUBCASE("gamma margin enforced") {
    CHECK_THROWS_AS(ids_two_ways(VectorPotentialSpec::zero(), field, 16.0, 33,
                                 1, 6.0, grid, 5, 1),
                    std::invalid_argument);
  }

  SUBCASE("zero-variance field: both curves identical, counting function") {
    const auto zero_field = GaussianFieldSpec::squared_exponential(0.0, 1.0);
    const auto rep = ids_two_ways(VectorPotentialSpec::zero(), zero_field,
                                  16.0, 33, 1, 4.0, grid, 3, 1);
    CHECK(rep.max_gap <= 1e-13);
    for (std::size_t i = 0; i < grid.size(); ++i)
      CHECK(rep.trace_curve.values[i] == rep.diag_curve.values[i]);
    // below the bottom of the spectrum the counting function vanishes
    CHECK(rep.trace_curve.values[0] == 0.0);
    // and it is nondecreasing, saturating at the per-volume state count
    for (std::size_t i = 1; i < grid.size(); ++i)
      CHECK(rep.trace_curve.values[i] >= rep.trace_curve.values[i - 1]);
  }

  SUBCASE("disordered ensemble: curves agree and are monotone") {
    const auto rep = ids_two_ways(VectorPotentialSpec::zero(), field, 16.0,
                                  33, 1, 4.0, grid, 40, 2);
    CHECK(rep.max_gap <= 3.0 * rep.max_gap_std_error +
                             0.05 * rep.trace_curve.values.back() + 1e-12);
    for (std::size_t i = 1; i < grid.size(); ++i) {
      CHECK(rep.trace_curve.values[i] >= rep.trace_curve.values[i - 1]);
      CHECK(rep.diag_curve.values[i] >= rep.diag_curve.values[i - 1]);
    }
    CHECK(rep.gamma_sensitivity < 0.5 * rep.trace_curve.values.back());
  }
}

TEST_CASE("laplace transform consistency") {
  std::vector<double> grid;
  for (int i = 0; i < 60; ++i) grid.push_back(-3.0 + 28.0 * i / 59.0);

  SUBCASE("zero-variance field: identity up to the bin budget") {
    const auto zero_field = GaussianFieldSpec::squared_exponential(0.0, 1.0);
    const auto rep = laplace_consistency(zero_field, 16.0, 33, 1, 4.0,
                                         {0.5, 1.0}, grid, 1, 3);
    for (const auto& e : rep.entries) {
      CHECK(e.pass);
      CHECK(e.residual <= e.bin_budget + 1e-12);
    }
  }

  SUBCASE("disordered ensemble at several times") {
    const auto field = GaussianFieldSpec::squared_exponential(0.5, 1.0);
    const auto rep = laplace_consistency(field, 16.0, 33, 1, 4.0,
                                         {0.5, 1.0, 2.0}, grid, 30, 4);
    for (const auto& e : rep.entries) CHECK(e.pass);
  }
}
