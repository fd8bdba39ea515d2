#pragma once

#include <json.hpp>
#include <string>

namespace fkmc {

/// Config schema violations map to exit code 2.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunResult {
  int exit_code = 0;      // 0 all checks passed, 1 checks failed,
                          // 2 schema violation, 3 numerical abort
  nlohmann::json output;  // embeds the config, provenance, results, checks
  std::string csv;        // populated for tabular subcommands
  bool has_csv = false;
};

/// Dispatches one experiment config to its subcommand. Never throws for
/// schema or numerical errors; those are reported through exit_code and the
/// "error" field of the output document.
RunResult run_experiment(const nlohmann::json& config);

/// The subcommand names the dispatcher accepts.
const std::vector<std::string>& experiment_subcommands();

}  // namespace fkmc
