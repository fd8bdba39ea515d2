#include <doctest.h>

#include <cstdio>
#include <fstream>

#include <cmath>

#include "fkmc/experiments.hpp"
#include "fkmc/serialization.hpp"

using namespace fkmc;
using nlohmann::json;

namespace {

json base_kernel_config() {
  return {{"schema_version", 1},
          {"subcommand", "kernel"},
          {"t", 1.0},
          {"x", {0.0}},
          {"y", {0.0}},
          {"scalar_potential",
           {{"v1", {{"kind", "harmonic"}, {"omega", {1.0}}}},
            {"v2", {{"kind", "zero"}}}}},
          {"mc", {{"n_samples", 4000}, {"n_steps", 64}}},
          {"seed", 7}};
}

}  // namespace

TEST_CASE("schema violations exit with code 2") {
  SUBCASE("missing subcommand") {
    const auto r = run_experiment(json{{"schema_version", 1}});
    CHECK(r.exit_code == 2);
    CHECK(r.output.contains("error"));
  }

  SUBCASE("unknown subcommand") {
    const auto r = run_experiment(json{{"subcommand", "frobnicate"}});
    CHECK(r.exit_code == 2);
  }

  SUBCASE("wrong schema version") {
    auto cfg = base_kernel_config();
    cfg["schema_version"] = 99;
    CHECK(run_experiment(cfg).exit_code == 2);
  }

  SUBCASE("missing required key") {
    auto cfg = base_kernel_config();
    cfg.erase("t");
    CHECK(run_experiment(cfg).exit_code == 2);
  }

  SUBCASE("malformed potential") {
    auto cfg = base_kernel_config();
    cfg["scalar_potential"] = {{"v1", {{"kind", "no-such-kind"}}}};
    CHECK(run_experiment(cfg).exit_code == 2);
  }

  SUBCASE("bad mc sizes") {
    auto cfg = base_kernel_config();
    cfg["mc"]["n_samples"] = 1;
    CHECK(run_experiment(cfg).exit_code == 2);
  }
}

TEST_CASE("numerical aborts exit with code 3") {
  auto cfg = base_kernel_config();
  cfg["scalar_potential"] = {{"v1", {{"kind", "constant"}, {"value", -800.0}}},
                             {"v2", {{"kind", "zero"}}}};
  const auto r = run_experiment(cfg);
  CHECK(r.exit_code == 3);
  CHECK(r.output.at("error").get<std::string>().find("overflow") !=
        std::string::npos);
}

TEST_CASE("kernel run embeds config, provenance, and results") {
  const auto cfg = base_kernel_config();
  const auto r = run_experiment(cfg);
  CHECK(r.exit_code == 0);
  CHECK(r.output.at("config") == cfg);
  CHECK(r.output.at("pass").get<bool>());
  CHECK(r.output.at("provenance").contains("config_hash"));
  CHECK(r.output.at("provenance").at("seed").get<std::uint64_t>() == 7);
  CHECK(r.output.at("results").at("mean_re").get<double>() > 0.0);
  CHECK(r.has_csv);
  CHECK(r.csv.rfind("# config ", 0) == 0);
  CHECK(r.csv.find("mean_re,mean_im,stderr,n_samples,n_steps,seed") !=
        std::string::npos);
}

TEST_CASE("identical configs reproduce identical outputs") {
  const auto cfg = base_kernel_config();
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  CHECK(a.output.at("results") == b.output.at("results"));

  auto cfg1 = cfg;
  cfg1["workers"] = 1;
  auto cfg8 = cfg;
  cfg8["workers"] = 8;
  const auto r1 = run_experiment(cfg1);
  const auto r8 = run_experiment(cfg8);
  const double m1 = r1.output.at("results").at("mean_re").get<double>();
  const double m8 = r8.output.at("results").at("mean_re").get<double>();
  CHECK(std::abs(m1 - m8) <= 1e-12 * std::abs(m1));
}

TEST_CASE("failed checks exit with code 1") {
  json cfg{{"subcommand", "diamagnetic"},
           {"t", 1.0},
           {"x", {0.0}},
           {"y", {0.0}},
           {"scalar_potential",
            {{"v1", {{"kind", "harmonic"}, {"omega", {1.0}}}},
             {"v2", {{"kind", "zero"}}}}},
           {"mc", {{"n_samples", 2000}, {"n_steps", 32}}},
           {"seed", 1},
           // A = 0 has zero margin, so demanding strictness must fail
           {"require_strict_sigmas", 3.0}};
  const auto r = run_experiment(cfg);
  CHECK(r.exit_code == 1);
  CHECK(!r.output.at("pass").get<bool>());
}

TEST_CASE("upsilon subcommand") {
  json cfg{{"subcommand", "upsilon"}, {"d", 1}, {"xi", 0.0}};
  const auto r = run_experiment(cfg);
  CHECK(r.exit_code == 0);
  CHECK(r.output.at("results").at("values")[0].get<double>() == 1.0);

  json list_cfg{{"subcommand", "upsilon"},
                {"d", 2},
                {"xi_list", {0.0, 0.2, 0.4, 0.6, 0.8}}};
  const auto rl = run_experiment(list_cfg);
  CHECK(rl.exit_code == 0);
  CHECK(rl.has_csv);
}

TEST_CASE("kato-kappa subcommand") {
  json cfg{{"subcommand", "kato-kappa"},
           {"f", {{"kind", "constant"}, {"value", 1.0}}},
           {"t", 0.5},
           {"n_s", 8},
           {"n_mc", 200},
           {"probe_points", {{0.0}, {1.0}}},
           {"seed", 9}};
  const auto r = run_experiment(cfg);
  CHECK(r.exit_code == 0);
  CHECK(r.output.at("results").at("kappa").get<double>() ==
        doctest::Approx(0.5 * std::sqrt(M_PI)).epsilon(1e-12));
}

TEST_CASE("spec serialization round trips") {
  SUBCASE("scalar spec") {
    ScalarPotentialSpec spec;
    spec.v1 = ScalarExpr::sum(
        {ScalarExpr::harmonic({1.0, 2.0}), ScalarExpr::constant(-0.5)});
    spec.v2 = ScalarExpr::truncated(ScalarExpr::power_law(-1, 1.5, 0.3), 4.0);
    const json j = serde::to_json(spec);
    const auto back = serde::scalar_spec_from_json(j);
    const std::vector<double> x{0.7, -1.2};
    CHECK(back(x) == spec(x));
    const std::vector<double> far{5.0, 5.0};
    CHECK(back(far) == spec(far));
  }

  SUBCASE("vector spec") {
    const auto a = poincare_gauge({0.0, 1.5, -1.5, 0.0}, 2);
    const auto back = serde::vector_spec_from_json(serde::to_json(a));
    const std::vector<double> x{0.3, 0.9};
    std::vector<double> o1(2), o2(2);
    a.eval(x, o1);
    back.eval(x, o2);
    CHECK(o1 == o2);
    CHECK_THROWS_AS(
        serde::to_json(VectorPotentialSpec::custom(
            1, [](std::span<const double>, std::span<double> o) { o[0] = 0; },
            [](std::span<const double>) { return 0.0; })),
        std::invalid_argument);
  }

  SUBCASE("field spec") {
    const auto f = GaussianFieldSpec::squared_exponential(1.5, 0.7);
    const auto back = serde::field_spec_from_json(serde::to_json(f));
    CHECK(back.covariance_r(0.4) == f.covariance_r(0.4));
  }

  SUBCASE("config hash is order independent and value sensitive") {
    const json a{{"alpha", 1}, {"beta", 2}};
    const json b{{"beta", 2}, {"alpha", 1}};
    CHECK(serde::config_hash(a) == serde::config_hash(b));
    const json c{{"alpha", 1}, {"beta", 3}};
    CHECK(serde::config_hash(a) != serde::config_hash(c));
  }
}

TEST_CASE("gaussian-identity subcommand") {
  json cfg{{"subcommand", "gaussian-identity"},
           {"path",
            {{"x", {0.0}}, {"y", {0.5}}, {"t", 1.0}, {"n_steps", 32},
             {"seed", 11}}},
           {"field",
            {{"kind", "squared_exponential"}, {"variance", 1.0},
             {"length", 1.0}}},
           {"n_field_samples", 20000},
           {"seed", 3}};
  const auto r = run_experiment(cfg);
  CHECK(r.exit_code == 0);
  CHECK(r.output.at("results").at("closed_form").get<double>() > 1.0);
}

TEST_CASE("spectral-checks can dump the hamiltonian to a text file") {
  const std::string path = "test_cli_ham_dump.txt";
  json cfg{{"subcommand", "spectral-checks"},
           {"grid", {{"box_side", 8.0}, {"n_per_dim", 16}, {"dim", 1}}},
           {"scalar_potential",
            {{"v1", {{"kind", "harmonic"}, {"omega", {1.0}}}},
             {"v2", {{"kind", "zero"}}}}},
           {"t", 1.0},
           {"seed", 2},
           {"dump_hamiltonian", path}};
  const auto r = run_experiment(cfg);
  CHECK(r.exit_code == 0);
  std::ifstream dump(path);
  REQUIRE(dump.good());
  std::string first;
  std::getline(dump, first);
  CHECK(first.rfind("# lattice", 0) == 0);
  std::remove(path.c_str());
}

TEST_CASE("ids subcommand emits the documented CSV") {
  json cfg{{"subcommand", "ids"},
           {"grid", {{"box_side", 16.0}, {"n_per_dim", 33}, {"dim", 1}}},
           {"field",
            {{"kind", "squared_exponential"}, {"variance", 0.25},
             {"length", 1.0}}},
           {"gamma_half_width", 4.0},
           {"energies", {{"min", -2.0}, {"max", 10.0}, {"n", 16}}},
           {"n_realizations", 10},
           {"seed", 5}};
  const auto r = run_experiment(cfg);
  CHECK(r.exit_code == 0);
  CHECK(r.has_csv);
  CHECK(r.csv.find("E,N_trace,N_diag,stderr") != std::string::npos);
}
