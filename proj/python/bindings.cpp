#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "fkmc/action.hpp"
#include "fkmc/bridge.hpp"
#include "fkmc/closed_forms.hpp"
#include "fkmc/experiments.hpp"
#include "fkmc/kernel.hpp"
#include "fkmc/potentials.hpp"
#include "fkmc/random_fields.hpp"
#include "fkmc/serialization.hpp"
#include "fkmc/spectral.hpp"
#include "fkmc/version.hpp"

namespace py = pybind11;
using namespace fkmc;

namespace {

nlohmann::json to_nlohmann(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) return obj.cast<std::int64_t>();
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::dict>(obj)) {
    nlohmann::json j = nlohmann::json::object();
    for (auto item : obj.cast<py::dict>())
      j[item.first.cast<std::string>()] = to_nlohmann(item.second);
    return j;
  }
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    nlohmann::json j = nlohmann::json::array();
    for (auto item : obj.cast<py::sequence>()) j.push_back(to_nlohmann(item));
    return j;
  }
  throw py::type_error("unsupported config value type");
}

py::object to_python(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null:
      return py::none();
    case nlohmann::json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer:
      return py::int_(j.get<std::int64_t>());
    case nlohmann::json::value_t::number_unsigned:
      return py::int_(j.get<std::uint64_t>());
    case nlohmann::json::value_t::number_float:
      return py::float_(j.get<double>());
    case nlohmann::json::value_t::string:
      return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(to_python(item));
      return out;
    }
    case nlohmann::json::value_t::object: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it)
        out[py::str(it.key())] = to_python(it.value());
      return out;
    }
    default:
      return py::none();
  }
}

McParams mc_args(std::int64_t n_samples, int n_steps, std::uint64_t seed,
                 int workers) {
  McParams mc;
  mc.n_samples = n_samples;
  mc.n_steps = n_steps;
  mc.seed = seed;
  mc.workers = workers;
  return mc;
}

py::array_t<double> path_array(const BridgePath& p) {
  py::array_t<double> out({p.grid.n_nodes(), p.dim});
  std::copy(p.positions.begin(), p.positions.end(), out.mutable_data());
  return out;
}

py::dict kernel_estimate_dict(const KernelEstimate& est) {
  py::dict d;
  d["mean"] = est.mean;
  d["stderr"] = est.std_error;
  d["n_samples"] = est.n_samples;
  d["n_steps"] = est.n_steps;
  d["t"] = est.t;
  d["x"] = est.x;
  d["y"] = est.y;
  d["prefactor"] = est.prefactor;
  d["tail_flagged"] = est.tail_flagged;
  d["tail_top_mass_fraction"] = est.tail_top_mass_fraction;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fkmc, m) {
  m.doc() =
      "Brownian-bridge Monte Carlo kernels for magnetic Schrodinger "
      "semigroups, with a lattice spectral oracle";
  m.attr("__version__") = kVersion;

  py::class_<TimeGrid>(m, "TimeGrid")
      .def(py::init<double, int>(), py::arg("t"), py::arg("n_steps"))
      .def_readonly("t", &TimeGrid::t)
      .def_readonly("n_steps", &TimeGrid::n_steps)
      .def("node", &TimeGrid::node);

  py::class_<BridgePath>(m, "BridgePath")
      .def_readonly("dim", &BridgePath::dim)
      .def_readonly("start", &BridgePath::start)
      .def_readonly("end", &BridgePath::end)
      .def_property_readonly("grid", [](const BridgePath& p) { return p.grid; })
      .def_property_readonly("positions", &path_array);

  m.def(
      "sample_bridge",
      [](std::uint64_t seed, const std::vector<double>& start,
         const std::vector<double>& end, const TimeGrid& grid) {
        return sample_bridge(seed, start, end, grid);
      },
      py::arg("seed"), py::arg("start"), py::arg("end"), py::arg("grid"));

  m.def(
      "sojourn_time",
      [](const BridgePath& path, const std::vector<double>& lo,
         const std::vector<double>& hi) {
        Box box;
        box.lo = lo;
        box.hi = hi;
        return sojourn_time(path, box);
      },
      py::arg("path"), py::arg("lo"), py::arg("hi"));

  py::class_<ScalarPotentialSpec>(m, "ScalarPotentialSpec")
      .def("__call__",
           [](const ScalarPotentialSpec& v, const std::vector<double>& x) {
             return v(x);
           })
      .def("v1", [](const ScalarPotentialSpec& v,
                    const std::vector<double>& x) { return v.v1_at(x); })
      .def("v2", [](const ScalarPotentialSpec& v,
                    const std::vector<double>& x) { return v.v2_at(x); })
      .def("to_json",
           [](const ScalarPotentialSpec& v) { return to_python(serde::to_json(v)); });

  py::class_<VectorPotentialSpec>(m, "VectorPotentialSpec")
      .def("__call__",
           [](const VectorPotentialSpec& a, const std::vector<double>& x) {
             std::vector<double> out(x.size());
             a.eval(x, out);
             return out;
           })
      .def("divergence",
           [](const VectorPotentialSpec& a, const std::vector<double>& x) {
             return a.divergence(x);
           });

  m.def("zero_potential", &scalar_zero);
  m.def("constant_potential", &scalar_constant, py::arg("c"));
  m.def("harmonic_potential", &scalar_harmonic, py::arg("omega"));
  m.def(
      "scalar_potential_from_json",
      [](const py::handle& j) {
        return serde::scalar_spec_from_json(to_nlohmann(j));
      },
      py::arg("spec"));
  m.def(
      "truncate",
      [](const ScalarPotentialSpec& spec, double radius) {
        return fkmc::truncate(spec, radius);
      },
      py::arg("spec"), py::arg("radius"));
  m.def("zero_vector_potential", &VectorPotentialSpec::zero);
  m.def(
      "poincare_gauge",
      [](const std::vector<std::vector<double>>& b) {
        const int d = static_cast<int>(b.size());
        std::vector<double> flat;
        for (const auto& row : b) {
          if (static_cast<int>(row.size()) != d)
            throw std::invalid_argument("B must be square");
          flat.insert(flat.end(), row.begin(), row.end());
        }
        return poincare_gauge(flat, d);
      },
      py::arg("b"));

  m.def("upsilon", &upsilon, py::arg("xi"), py::arg("d"));
  m.def(
      "kato_kappa",
      [](const std::function<double(std::vector<double>)>& f, double t,
         int n_s, int n_mc, const std::vector<std::vector<double>>& probes,
         std::uint64_t seed) {
        if (probes.empty()) throw std::invalid_argument("empty probe set");
        const int dim = static_cast<int>(probes[0].size());
        std::vector<double> flat;
        for (const auto& p : probes) flat.insert(flat.end(), p.begin(), p.end());
        return kato_kappa(
            [&f](std::span<const double> x) {
              return f(std::vector<double>(x.begin(), x.end()));
            },
            t, n_s, n_mc, flat, dim, seed);
      },
      py::arg("f"), py::arg("t"), py::arg("n_s"), py::arg("n_mc"),
      py::arg("probe_points"), py::arg("seed") = 0);

  py::class_<ActionValue>(m, "ActionValue")
      .def_readonly("value", &ActionValue::value)
      .def_readonly("ito_part", &ActionValue::ito_part)
      .def_readonly("divergence_part", &ActionValue::divergence_part)
      .def_readonly("scalar_part", &ActionValue::scalar_part);

  m.def("action", &action, py::arg("path"), py::arg("a"), py::arg("v"));
  m.def("ito_line_integral", &ito_line_integral, py::arg("path"), py::arg("a"));
  m.def("stratonovich_line_integral", &stratonovich_line_integral,
        py::arg("path"), py::arg("a"));
  m.def(
      "time_integral",
      [](const BridgePath& path, const ScalarPotentialSpec& v) {
        return time_integral(path, v);
      },
      py::arg("path"), py::arg("v"));

  m.def(
      "estimate_kernel",
      [](const std::vector<double>& x, const std::vector<double>& y, double t,
         const VectorPotentialSpec& a, const ScalarPotentialSpec& v,
         std::int64_t n_samples, int n_steps, std::uint64_t seed,
         int workers) {
        return kernel_estimate_dict(estimate_kernel(
            x, y, t, a, v, mc_args(n_samples, n_steps, seed, workers)));
      },
      py::arg("x"), py::arg("y"), py::arg("t"), py::arg("a"), py::arg("v"),
      py::arg("n_samples") = 10000, py::arg("n_steps") = 256,
      py::arg("seed") = 0, py::arg("workers") = 0);

  m.def(
      "diamagnetic_check",
      [](const std::vector<double>& x, const std::vector<double>& y, double t,
         const VectorPotentialSpec& a, const ScalarPotentialSpec& v,
         std::int64_t n_samples, int n_steps, std::uint64_t seed,
         int workers) {
        const auto rep = diamagnetic_check(
            x, y, t, a, v, mc_args(n_samples, n_steps, seed, workers));
        py::dict d;
        d["lhs"] = rep.lhs;
        d["rhs"] = rep.rhs;
        d["margin_sigmas"] = rep.margin_sigmas;
        d["pass"] = rep.pass;
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("t"), py::arg("a"), py::arg("v"),
      py::arg("n_samples") = 10000, py::arg("n_steps") = 256,
      py::arg("seed") = 0, py::arg("workers") = 0);

  py::class_<GaussianFieldSpec>(m, "GaussianFieldSpec")
      .def_static("squared_exponential", &GaussianFieldSpec::squared_exponential,
                  py::arg("variance"), py::arg("length"))
      .def_static("tabulated_radial", &GaussianFieldSpec::tabulated_radial,
                  py::arg("r"), py::arg("c"))
      .def("covariance_r", &GaussianFieldSpec::covariance_r)
      .def("c0", &GaussianFieldSpec::c0);

  m.def(
      "sample_on_points",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> pts,
         const GaussianFieldSpec& spec, std::uint64_t seed) {
        if (pts.ndim() != 2)
          throw std::invalid_argument("points must be (n, dim)");
        const int dim = static_cast<int>(pts.shape(1));
        const std::span<const double> flat(pts.data(),
                                           static_cast<std::size_t>(pts.size()));
        const auto values = sample_on_points(flat, dim, spec, seed);
        py::array_t<double> out(static_cast<py::ssize_t>(values.size()));
        std::copy(values.begin(), values.end(), out.mutable_data());
        return out;
      },
      py::arg("points"), py::arg("spec"), py::arg("seed") = 0);

  m.def(
      "averaged_kernel",
      [](const std::vector<double>& x, const std::vector<double>& y, double t,
         const VectorPotentialSpec& a, const GaussianFieldSpec& spec,
         std::int64_t n_samples, int n_steps, std::uint64_t seed,
         int workers) {
        return kernel_estimate_dict(averaged_kernel(
            x, y, t, a, spec, mc_args(n_samples, n_steps, seed, workers)));
      },
      py::arg("x"), py::arg("y"), py::arg("t"), py::arg("a"), py::arg("spec"),
      py::arg("n_samples") = 10000, py::arg("n_steps") = 128,
      py::arg("seed") = 0, py::arg("workers") = 0);

  m.def("l_t", &l_t, py::arg("spec"), py::arg("t"));

  py::class_<GridHamiltonian>(m, "GridHamiltonian")
      .def_property_readonly(
          "n_sites", [](const GridHamiltonian& h) { return h.geom.n_sites(); })
      .def_property_readonly("h",
                             [](const GridHamiltonian& h) { return h.geom.h(); })
      .def("nearest_site",
           [](const GridHamiltonian& h, const std::vector<double>& x) {
             return h.geom.nearest_site(x);
           })
      .def("site_coords", [](const GridHamiltonian& h, std::int64_t site) {
        std::vector<double> x;
        h.geom.site_coords(site, x);
        return x;
      });

  m.def("build_grid_hamiltonian",
        py::overload_cast<double, int, int, const VectorPotentialSpec&,
                          const ScalarPotentialSpec&>(&build_grid_hamiltonian),
        py::arg("box_side"), py::arg("n_per_dim"), py::arg("dim"),
        py::arg("a"), py::arg("v"));

  py::class_<SpectralDecomposition>(m, "SpectralDecomposition")
      .def_property_readonly("eigenvalues",
                             [](const SpectralDecomposition& dec) {
                               py::array_t<double> out(
                                   static_cast<py::ssize_t>(
                                       dec.eigenvalues.size()));
                               std::copy(dec.eigenvalues.data(),
                                         dec.eigenvalues.data() +
                                             dec.eigenvalues.size(),
                                         out.mutable_data());
                               return out;
                             })
      .def_property_readonly(
          "hamiltonian", [](const SpectralDecomposition& d) { return d.ham; });

  m.def("decompose", &decompose, py::arg("hamiltonian"));
  m.def(
      "heat_kernel",
      [](const SpectralDecomposition& dec, double t, std::int64_t x,
         std::int64_t y) { return heat_kernel(dec, t, x, y); },
      py::arg("decomposition"), py::arg("t"), py::arg("x_site"),
      py::arg("y_site"));
  m.def(
      "projection_kernel",
      [](const SpectralDecomposition& dec,
         const std::vector<std::pair<double, double>>& intervals,
         std::int64_t x, std::int64_t y) {
        EnergySet set;
        for (const auto& [lo, hi] : intervals) set.push_back({lo, hi});
        return projection_kernel(dec, set, x, y);
      },
      py::arg("decomposition"), py::arg("intervals"), py::arg("x_site"),
      py::arg("y_site"));

  m.def("free_heat_kernel",
        [](const std::vector<double>& x, const std::vector<double>& y,
           double t) { return free_heat_kernel(x, y, t); });
  m.def("mehler_kernel", &mehler_kernel, py::arg("x"), py::arg("y"),
        py::arg("t"), py::arg("omega"));
  m.def("landau_diagonal", &landau_diagonal, py::arg("b"), py::arg("t"));

  m.def(
      "run_experiment",
      [](const py::handle& config) {
        const RunResult r = run_experiment(to_nlohmann(config));
        py::dict d;
        d["exit_code"] = r.exit_code;
        d["output"] = to_python(r.output);
        if (r.has_csv) d["csv"] = r.csv;
        return d;
      },
      py::arg("config"),
      "Run one experiment config (same dispatcher as the CLI).");
}
