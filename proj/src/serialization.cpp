#include "fkmc/serialization.hpp"

#include <stdexcept>

namespace fkmc::serde {

json to_json(const ScalarExpr& expr) {
  json j;
  switch (expr.kind()) {
    case ScalarExpr::Kind::Zero:
      j["kind"] = "zero";
      break;
    case ScalarExpr::Kind::Constant:
      j["kind"] = "constant";
      j["value"] = expr.constant_value();
      break;
    case ScalarExpr::Kind::Harmonic:
      j["kind"] = "harmonic";
      j["omega"] = expr.omega();
      break;
    case ScalarExpr::Kind::PowerLaw:
      j["kind"] = "power_law";
      j["sign"] = expr.sign();
      j["exponent"] = expr.exponent();
      j["coefficient"] = expr.coefficient();
      break;
    case ScalarExpr::Kind::Sum: {
      j["kind"] = "sum";
      json terms = json::array();
      for (const auto& ch : expr.children()) terms.push_back(to_json(ch));
      j["terms"] = std::move(terms);
      break;
    }
    case ScalarExpr::Kind::Truncated:
      j["kind"] = "truncated";
      j["radius"] = expr.radius();
      j["inner"] = to_json(expr.children()[0]);
      break;
    case ScalarExpr::Kind::FieldSample: {
      j["kind"] = "field_sample";
      const auto& f = *expr.field();
      j["dim"] = f.dim;
      j["points"] = f.points;
      j["values"] = f.values;
      j["max_match_distance"] = f.max_match_distance;
      break;
    }
  }
  return j;
}

ScalarExpr scalar_expr_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "zero") return ScalarExpr::zero();
  if (kind == "constant")
    return ScalarExpr::constant(j.at("value").get<double>());
  if (kind == "harmonic")
    return ScalarExpr::harmonic(j.at("omega").get<std::vector<double>>());
  if (kind == "power_law")
    return ScalarExpr::power_law(j.at("sign").get<int>(),
                                 j.at("exponent").get<double>(),
                                 j.at("coefficient").get<double>());
  if (kind == "sum") {
    std::vector<ScalarExpr> terms;
    for (const auto& t : j.at("terms")) terms.push_back(scalar_expr_from_json(t));
    return ScalarExpr::sum(std::move(terms));
  }
  if (kind == "truncated")
    return ScalarExpr::truncated(scalar_expr_from_json(j.at("inner")),
                                 j.at("radius").get<double>());
  if (kind == "field_sample") {
    auto field = std::make_shared<FieldRealization>();
    field->dim = j.at("dim").get<int>();
    field->points = j.at("points").get<std::vector<double>>();
    field->values = j.at("values").get<std::vector<double>>();
    field->max_match_distance = j.value("max_match_distance", 1e-9);
    return ScalarExpr::field_sample(std::move(field));
  }
  throw std::invalid_argument("scalar expr: unknown kind '" + kind + "'");
}

json to_json(const ScalarPotentialSpec& spec) {
  return {{"v1", to_json(spec.v1)}, {"v2", to_json(spec.v2)}};
}

ScalarPotentialSpec scalar_spec_from_json(const json& j) {
  ScalarPotentialSpec spec;
  spec.v1 = scalar_expr_from_json(j.at("v1"));
  spec.v2 = j.contains("v2") ? scalar_expr_from_json(j.at("v2"))
                             : ScalarExpr::zero();
  return spec;
}

json to_json(const VectorPotentialSpec& spec) {
  json j;
  switch (spec.kind()) {
    case VectorPotentialSpec::Kind::Zero:
      j["kind"] = "zero";
      break;
    case VectorPotentialSpec::Kind::ConstantField: {
      j["kind"] = "constant_field";
      const int d = spec.dim();
      j["dim"] = d;
      json rows = json::array();
      for (int r = 0; r < d; ++r) {
        json row = json::array();
        for (int c = 0; c < d; ++c)
          row.push_back(spec.field_matrix()[static_cast<std::size_t>(r) * d + c]);
        rows.push_back(std::move(row));
      }
      j["B"] = std::move(rows);
      break;
    }
    case VectorPotentialSpec::Kind::Custom:
      throw std::invalid_argument(
          "vector potential: custom callables are not serializable");
  }
  return j;
}

VectorPotentialSpec vector_spec_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "zero") return VectorPotentialSpec::zero();
  if (kind == "constant_field") {
    const int d = j.at("dim").get<int>();
    const auto rows = j.at("B");
    if (static_cast<int>(rows.size()) != d)
      throw std::invalid_argument("constant_field: B row count != dim");
    std::vector<double> b(static_cast<std::size_t>(d) * d);
    for (int r = 0; r < d; ++r) {
      if (static_cast<int>(rows[r].size()) != d)
        throw std::invalid_argument("constant_field: B column count != dim");
      for (int c = 0; c < d; ++c)
        b[static_cast<std::size_t>(r) * d + c] = rows[r][c].get<double>();
    }
    return poincare_gauge(b, d);
  }
  throw std::invalid_argument("vector potential: unknown kind '" + kind + "'");
}

json to_json(const GaussianFieldSpec& spec) {
  json j;
  switch (spec.kind) {
    case GaussianFieldSpec::Kind::SquaredExponential:
      j["kind"] = "squared_exponential";
      j["variance"] = spec.variance;
      j["length"] = spec.length;
      break;
    case GaussianFieldSpec::Kind::TabulatedRadial:
      j["kind"] = "tabulated_radial";
      j["r"] = spec.r_table;
      j["c"] = spec.c_table;
      break;
  }
  return j;
}

GaussianFieldSpec field_spec_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "squared_exponential")
    return GaussianFieldSpec::squared_exponential(
        j.at("variance").get<double>(), j.at("length").get<double>());
  if (kind == "tabulated_radial")
    return GaussianFieldSpec::tabulated_radial(
        j.at("r").get<std::vector<double>>(),
        j.at("c").get<std::vector<double>>());
  throw std::invalid_argument("field spec: unknown kind '" + kind + "'");
}

json to_json(const KernelEstimate& est) {
  return {{"mean_re", est.mean.real()},
          {"mean_im", est.mean.imag()},
          {"stderr", est.std_error},
          {"n_samples", est.n_samples},
          {"n_steps", est.n_steps},
          {"t", est.t},
          {"x", est.x},
          {"y", est.y},
          {"prefactor", est.prefactor},
          {"tail_flagged", est.tail_flagged},
          {"tail_top_mass_fraction", est.tail_top_mass_fraction}};
}

std::uint64_t config_hash(const json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace fkmc::serde
