#pragma once

#include <json.hpp>

#include "fkmc/kernel.hpp"
#include "fkmc/potentials.hpp"
#include "fkmc/random_fields.hpp"

namespace fkmc::serde {

using nlohmann::json;

/// Scalar expression schema: {"kind": ..., parameters...}; kinds zero,
/// constant, harmonic, power_law, sum, truncated, field_sample.
json to_json(const ScalarExpr& expr);
ScalarExpr scalar_expr_from_json(const json& j);

/// Potential spec schema: {"v1": expr, "v2": expr}.
json to_json(const ScalarPotentialSpec& spec);
ScalarPotentialSpec scalar_spec_from_json(const json& j);

/// Vector potential schema: {"kind": "zero"} or
/// {"kind": "constant_field", "dim": d, "B": [[...], ...]}.
/// Custom callables are not serializable and are rejected.
json to_json(const VectorPotentialSpec& spec);
VectorPotentialSpec vector_spec_from_json(const json& j);

/// Field spec schema: {"kind": "squared_exponential", "variance", "length"}
/// or {"kind": "tabulated_radial", "r": [...], "c": [...]}.
json to_json(const GaussianFieldSpec& spec);
GaussianFieldSpec field_spec_from_json(const json& j);

json to_json(const KernelEstimate& est);

/// FNV-1a hash of the canonical (sorted-key) dump; recorded in provenance.
std::uint64_t config_hash(const json& j);

}  // namespace fkmc::serde
