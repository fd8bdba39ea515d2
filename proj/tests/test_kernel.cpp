#include <doctest.h>

#include <cmath>

#include "fkmc/closed_forms.hpp"
#include "fkmc/kernel.hpp"
#include "oracles.hpp"

using namespace fkmc;

namespace {

const std::vector<double> kOrigin1{0.0};
const std::vector<double> kOrigin2{0.0, 0.0};

VectorPotentialSpec landau_gauge(double b) {
  return poincare_gauge({0.0, b, -b, 0.0}, 2);
}

}  // namespace

TEST_CASE("free kernel is exact with zero standard error") {
  McParams mc;
  mc.n_samples = 5000;
  mc.n_steps = 32;
  mc.seed = 9;

  SUBCASE("diagonal") {
    const auto est = estimate_kernel(kOrigin1, kOrigin1, 1.0,
                                     VectorPotentialSpec::zero(),
                                     scalar_zero(), mc);
    CHECK(est.mean.real() == est.prefactor);
    CHECK(est.mean.imag() == 0.0);
    CHECK(est.std_error == 0.0);
  }

  SUBCASE("off diagonal x=0, y=1") {
    const std::vector<double> y{1.0};
    const auto est = estimate_kernel(kOrigin1, y, 1.0,
                                     VectorPotentialSpec::zero(),
                                     scalar_zero(), mc);
    const double expected = std::exp(-0.5) / std::sqrt(2.0 * M_PI);
    CHECK(std::abs(est.mean.real() - expected) <= 1e-12 * expected);
    CHECK(est.std_error == 0.0);
  }
}

TEST_CASE("constant potential scales the free kernel exactly") {
  McParams mc;
  mc.n_samples = 2000;
  mc.n_steps = 64;
  mc.seed = 4;
  const double c = 0.8, t = 1.5;
  const auto est = estimate_kernel(kOrigin1, kOrigin1, t,
                                   VectorPotentialSpec::zero(),
                                   scalar_constant(c), mc);
  const double expected = std::exp(-c * t) * est.prefactor;
  CHECK(std::abs(est.mean.real() - expected) <= 1e-12 * expected);
  CHECK(est.std_error == 0.0);
}

TEST_CASE("shifting V by a constant multiplies the estimate by e^{-ct}") {
  McParams mc;
  mc.n_samples = 20000;
  mc.n_steps = 64;
  mc.seed = 31;
  const double c = 1.3, t = 0.7;
  const auto base = estimate_kernel(kOrigin1, kOrigin1, t,
                                    VectorPotentialSpec::zero(),
                                    scalar_harmonic({1.0}), mc);
  ScalarPotentialSpec shifted;
  shifted.v1 = ScalarExpr::sum(
      {ScalarExpr::harmonic({1.0}), ScalarExpr::constant(c)});
  shifted.v2 = ScalarExpr::zero();
  const auto est = estimate_kernel(kOrigin1, kOrigin1, t,
                                   VectorPotentialSpec::zero(), shifted, mc);
  const double factor = std::exp(-c * t);
  CHECK(std::abs(est.mean.real() - factor * base.mean.real()) <=
        1e-12 * std::abs(factor * base.mean.real()));
}

TEST_CASE("positivity for A = 0") {
  McParams mc;
  mc.n_samples = 5000;
  mc.n_steps = 64;
  mc.seed = 12;
  const auto est = estimate_kernel(kOrigin1, kOrigin1, 1.0,
                                   VectorPotentialSpec::zero(),
                                   scalar_harmonic({1.0}), mc);
  CHECK(est.mean.real() > 0.0);
  CHECK(est.mean.imag() == 0.0);
}

TEST_CASE("V2 = 0 truncation reproduces the untruncated estimate bit for bit") {
  McParams mc;
  mc.n_samples = 10000;
  mc.n_steps = 64;
  mc.seed = 77;
  const auto v = scalar_harmonic({1.0});
  const auto base = estimate_kernel(kOrigin1, kOrigin1, 1.0,
                                    VectorPotentialSpec::zero(), v, mc);
  for (double r : {0.5, 2.0, 64.0}) {
    const auto est = estimate_kernel(kOrigin1, kOrigin1, 1.0,
                                     VectorPotentialSpec::zero(),
                                     truncate(v, r), mc);
    CHECK(est.mean == base.mean);
    CHECK(est.std_error == base.std_error);
  }
}

TEST_CASE("harmonic oscillator matches the Mehler diagonal") {
  McParams mc;
  mc.n_samples = 100000;
  mc.n_steps = 512;
  mc.seed = 2;
  const auto est = estimate_kernel(kOrigin1, kOrigin1, 1.0,
                                   VectorPotentialSpec::zero(),
                                   scalar_harmonic({1.0}), mc);
  const double mehler = mehler_kernel(0.0, 0.0, 1.0, 1.0);
  CHECK(std::abs(est.mean.real() - mehler) <= 3.0 * est.std_error);
  CHECK(est.std_error <= 2e-3);
}

TEST_CASE("off-diagonal harmonic value matches Mehler") {
  McParams mc;
  mc.n_samples = 100000;
  mc.n_steps = 256;
  mc.seed = 6;
  const std::vector<double> x{0.5}, y{-0.25};
  const auto est = estimate_kernel(x, y, 0.8, VectorPotentialSpec::zero(),
                                   scalar_harmonic({1.0}), mc);
  const double mehler = mehler_kernel(0.5, -0.25, 0.8, 1.0);
  CHECK(std::abs(est.mean.real() - mehler) <= 3.0 * est.std_error + 2e-4);
}

TEST_CASE("constant magnetic field matches the Landau diagonal") {
  McParams mc;
  mc.n_samples = 100000;
  mc.n_steps = 1024;
  mc.seed = 3;
  const auto est = estimate_kernel(kOrigin2, kOrigin2, 1.0, landau_gauge(1.0),
                                   scalar_zero(), mc);
  const double expected = landau_diagonal(1.0, 1.0);
  CHECK(std::abs(est.mean.real() - expected) <= 3.0 * est.std_error);
  CHECK(std::abs(est.mean.imag()) <= 3.0 * est.std_error);
}

TEST_CASE("results are reproducible and independent of the worker count") {
  McParams mc;
  mc.n_samples = 30000;
  mc.n_steps = 64;
  mc.seed = 555;
  mc.workers = 1;
  const auto v = scalar_harmonic({1.0});
  const auto single = estimate_kernel(kOrigin1, kOrigin1, 1.0,
                                      VectorPotentialSpec::zero(), v, mc);
  mc.workers = 8;
  const auto pooled = estimate_kernel(kOrigin1, kOrigin1, 1.0,
                                      VectorPotentialSpec::zero(), v, mc);
  CHECK(single.mean.real() == pooled.mean.real());
  CHECK(single.mean.imag() == pooled.mean.imag());
  CHECK(single.std_error == pooled.std_error);

  mc.seed = 556;
  const auto other = estimate_kernel(kOrigin1, kOrigin1, 1.0,
                                     VectorPotentialSpec::zero(), v, mc);
  CHECK(other.mean.real() != single.mean.real());
}

TEST_CASE("summand overflow aborts the run and names the path") {
  McParams mc;
  mc.n_samples = 100;
  mc.n_steps = 8;
  mc.seed = 1;
  CHECK_THROWS_AS(estimate_kernel(kOrigin1, kOrigin1, 1.0,
                                  VectorPotentialSpec::zero(),
                                  scalar_constant(-800.0), mc),
                  PathOverflowError);
}

TEST_CASE("grid refinement differences shrink for the harmonic case") {
  const auto v = scalar_harmonic({1.0});
  auto value = [&](int n_steps) {
    McParams mc;
    mc.n_samples = 100000;
    mc.n_steps = n_steps;
    mc.seed = 10;
    return estimate_kernel(kOrigin1, kOrigin1, 1.0,
                           VectorPotentialSpec::zero(), v, mc);
  };
  double prev_diff = std::numeric_limits<double>::infinity();
  double prev_se = 0.0;
  for (int m : {64, 256, 1024}) {
    const auto a = value(m);
    const auto b = value(2 * m);
    const double diff = std::abs(a.mean.real() - b.mean.real());
    const double se = std::hypot(a.std_error, b.std_error);
    CHECK(diff <= prev_diff + 3.0 * std::hypot(se, prev_se));
    prev_diff = diff;
    prev_se = se;
  }
}

TEST_CASE("hermiticity") {
  SUBCASE("A = 0 gives an exactly zero residual from reversed-path reuse") {
    McParams mc;
    mc.n_samples = 5000;
    mc.n_steps = 64;
    mc.seed = 8;
    const std::vector<double> x{0.0}, y{0.75};
    const auto rep = hermiticity_residual(x, y, 1.0,
                                          VectorPotentialSpec::zero(),
                                          scalar_harmonic({1.0}), mc);
    CHECK(rep.residual == 0.0);
    CHECK(rep.residual_std_error == 0.0);
  }

  SUBCASE("constant field, x != y: residual within 3 sigma") {
    McParams mc;
    mc.n_samples = 40000;
    mc.n_steps = 128;
    mc.seed = 14;
    const std::vector<double> x{0.0, 0.0}, y{0.5, -0.5};
    const auto rep = hermiticity_residual(x, y, 1.0, landau_gauge(1.0),
                                          scalar_zero(), mc);
    CHECK(rep.residual <= 3.0 * rep.residual_std_error + 1e-13);
  }

  SUBCASE("x = y: the diagonal is real within 3 sigma") {
    McParams mc;
    mc.n_samples = 40000;
    mc.n_steps = 128;
    mc.seed = 15;
    const std::vector<double> x{0.25, 0.25};
    const auto rep = hermiticity_residual(x, x, 1.0, landau_gauge(1.0),
                                          scalar_zero(), mc);
    CHECK(std::abs(rep.forward.mean.imag()) <= 3.0 * rep.forward.std_error);
  }
}

TEST_CASE("diamagnetic comparison") {
  SUBCASE("A = 0: both sides identical by shared seeds") {
    McParams mc;
    mc.n_samples = 5000;
    mc.n_steps = 64;
    mc.seed = 20;
    const auto rep = diamagnetic_check(kOrigin1, kOrigin1, 1.0,
                                       VectorPotentialSpec::zero(),
                                       scalar_harmonic({1.0}), mc);
    CHECK(rep.lhs == rep.rhs);
    CHECK(rep.pass);
  }

  SUBCASE("constant field: strictly smaller beyond 3 sigma") {
    McParams mc;
    mc.n_samples = 100000;
    mc.n_steps = 256;
    mc.seed = 21;
    const auto rep = diamagnetic_check(kOrigin2, kOrigin2, 1.0,
                                       landau_gauge(1.0), scalar_zero(), mc);
    CHECK(rep.pass);
    CHECK(rep.margin_sigmas > 3.0);
    // closed forms: Landau diagonal under the free diagonal
    CHECK(rep.rhs == doctest::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-12));
    CHECK(rep.lhs < rep.rhs);
  }

  SUBCASE("common constant shift leaves the comparison intact") {
    McParams mc;
    mc.n_samples = 50000;
    mc.n_steps = 256;
    mc.seed = 21;
    const auto rep = diamagnetic_check(kOrigin2, kOrigin2, 1.0,
                                       landau_gauge(1.0),
                                       scalar_constant(0.6), mc);
    CHECK(rep.pass);
    CHECK(rep.margin_sigmas > 3.0);
  }
}

TEST_CASE("semigroup property") {
  Box box;
  box.lo = {-6.0};
  box.hi = {6.0};

  SUBCASE("free case: Chapman-Kolmogorov to quadrature accuracy") {
    McParams mc;
    mc.n_samples = 200;
    mc.n_steps = 16;
    mc.seed = 40;
    const auto rep = semigroup_residual(kOrigin1, kOrigin1, 0.5, 0.5,
                                        VectorPotentialSpec::zero(),
                                        scalar_zero(), box, 41, mc);
    CHECK(rep.residual < 1e-3);
    CHECK(rep.pass);
  }

  SUBCASE("constant potential scales both sides") {
    McParams mc;
    mc.n_samples = 200;
    mc.n_steps = 16;
    mc.seed = 41;
    const auto rep = semigroup_residual(kOrigin1, kOrigin1, 0.5, 0.5,
                                        VectorPotentialSpec::zero(),
                                        scalar_constant(0.9), box, 41, mc);
    CHECK(rep.pass);
    CHECK(rep.residual < 1e-3);
  }

  SUBCASE("harmonic case within the combined budget") {
    McParams mc;
    mc.n_samples = 20000;
    mc.n_steps = 128;
    mc.seed = 42;
    const auto rep = semigroup_residual(kOrigin1, kOrigin1, 0.5, 0.5,
                                        VectorPotentialSpec::zero(),
                                        scalar_harmonic({1.0}), box, 41, mc);
    CHECK(rep.pass);
    CHECK(rep.error_budget <= 0.01 * std::abs(rep.lhs.mean));
  }

  SUBCASE("too small a box is rejected") {
    Box tiny;
    tiny.lo = {-0.5};
    tiny.hi = {0.5};
    McParams mc;
    mc.n_samples = 100;
    mc.n_steps = 8;
    mc.seed = 43;
    CHECK_THROWS_AS(semigroup_residual(kOrigin1, kOrigin1, 0.5, 0.5,
                                       VectorPotentialSpec::zero(),
                                       scalar_zero(), tiny, 11, mc),
                    std::invalid_argument);
  }
}

TEST_CASE("bound envelope") {
  McParams mc;
  mc.n_samples = 200;
  mc.n_steps = 16;
  mc.seed = 50;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pts;
  for (double xv : {-2.0, -1.0, 0.0, 1.0, 2.0})
    for (double yv : {-2.0, 0.0, 2.0})
      pts.push_back({{xv}, {yv}});

  SUBCASE("free case: the statistic peaks at the origin pair") {
    const auto rep = bound_envelope(1.0, 0.1, VectorPotentialSpec::zero(),
                                    scalar_zero(), pts, mc);
    const double expected = -0.5 * std::log(2.0 * M_PI);
    CHECK(rep.max_observed == doctest::Approx(expected).epsilon(1e-12));
    CHECK(rep.samples[rep.argmax_index].x == std::vector<double>{0.0});
    CHECK(rep.samples[rep.argmax_index].y == std::vector<double>{0.0});
  }

  SUBCASE("larger delta never increases the observed maximum") {
    const auto rep1 = bound_envelope(1.0, 0.05, VectorPotentialSpec::zero(),
                                     scalar_harmonic({1.0}), pts, mc);
    const auto rep2 = bound_envelope(1.0, 0.10, VectorPotentialSpec::zero(),
                                     scalar_harmonic({1.0}), pts, mc);
    CHECK(rep2.max_observed <= rep1.max_observed);
  }

  SUBCASE("mildly unbounded V2 keeps a finite maximum at an interior pair") {
    ScalarPotentialSpec v;
    v.v1 = ScalarExpr::zero();
    v.v2 = ScalarExpr::power_law(-1, 1.5, 0.01);
    McParams mc2;
    mc2.n_samples = 4000;
    mc2.n_steps = 64;
    mc2.seed = 51;
    const auto rep = bound_envelope(1.0, 0.05, VectorPotentialSpec::zero(), v,
                                    pts, mc2);
    CHECK(std::isfinite(rep.max_observed));
    const auto& arg = rep.samples[rep.argmax_index];
    CHECK(std::abs(arg.x[0]) < 2.0);
    CHECK(std::abs(arg.y[0]) < 2.0);
  }
}

TEST_CASE("truncation convergence study") {
  SUBCASE("radii validation") {
    McParams mc;
    mc.n_samples = 10;
    mc.n_steps = 8;
    const auto v = scalar_harmonic({1.0});
    CHECK_THROWS_AS(truncation_convergence(kOrigin1, kOrigin1, 1.0,
                                           VectorPotentialSpec::zero(), v,
                                           {0.5, 2.0}, 0.0, 0.0, mc),
                    std::invalid_argument);
    CHECK_THROWS_AS(truncation_convergence(kOrigin1, kOrigin1, 1.0,
                                           VectorPotentialSpec::zero(), v,
                                           {4.0, 2.0}, 0.0, 0.0, mc),
                    std::invalid_argument);
  }

  SUBCASE("radius beyond every excursion gives exactly zero error") {
    ScalarPotentialSpec v;
    v.v1 = ScalarExpr::zero();
    v.v2 = ScalarExpr::power_law(-1, 1.5, 0.05);
    McParams mc;
    mc.n_samples = 10000;
    mc.n_steps = 64;
    mc.seed = 60;
    const auto rep = truncation_convergence(kOrigin1, kOrigin1, 1.0,
                                            VectorPotentialSpec::zero(), v,
                                            {20.0}, 0.0, 0.0, mc);
    CHECK(rep.entries[0].weighted_error == 0.0);
    CHECK(rep.entries[0].noise_floor == 0.0);
    CHECK(!rep.rate_resolved);
    CHECK(rep.message == "rate indistinguishable from noise");
  }

  SUBCASE("pure V1 potential has identically zero error for every R") {
    McParams mc;
    mc.n_samples = 5000;
    mc.n_steps = 64;
    mc.seed = 61;
    const auto rep = truncation_convergence(kOrigin1, kOrigin1, 1.0,
                                            VectorPotentialSpec::zero(),
                                            scalar_harmonic({1.0}),
                                            {2.0, 4.0, 8.0}, 0.1, 0.1, mc);
    for (const auto& e : rep.entries) CHECK(e.weighted_error == 0.0);
  }

  SUBCASE("sub-quadratic V2 yields a slope compatible with the 1/R^2 envelope") {
    ScalarPotentialSpec v;
    v.v1 = ScalarExpr::zero();
    v.v2 = ScalarExpr::power_law(-1, 1.9, 1e-3);
    McParams mc;
    mc.n_samples = 60000;
    mc.n_steps = 512;
    mc.seed = 5;
    const auto rep = truncation_convergence(kOrigin1, kOrigin1, 36.0,
                                            VectorPotentialSpec::zero(), v,
                                            {2.0, 4.0, 8.0, 16.0}, 0.0, 0.0,
                                            mc);
    REQUIRE(rep.rate_resolved);
    CHECK(rep.fitted_slope >= -2.5);
    CHECK(rep.fitted_slope <= -1.5);
  }
}

TEST_CASE("constant-magnitude summands are never tail flagged") {
  McParams mc;
  mc.n_samples = 20000;
  mc.n_steps = 64;
  mc.seed = 70;
  const auto est = estimate_kernel(kOrigin2, kOrigin2, 1.0, landau_gauge(1.0),
                                   scalar_zero(), mc);
  CHECK(!est.tail_flagged);
  CHECK(est.tail_top_mass_fraction == doctest::Approx(0.001).epsilon(0.05));
}
