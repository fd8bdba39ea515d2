#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "fkmc/experiments.hpp"
#include "fkmc/version.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_path;
  std::string format = "json";
  int workers = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int execute(const CommonFlags& flags, const std::string& forced_subcommand) {
  nlohmann::json config;
  {
    std::ifstream in(flags.config_path);
    if (!in) {
      std::cerr << "error: cannot open config file '" << flags.config_path
                << "'\n";
      return 2;
    }
    try {
      in >> config;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error: config is not valid JSON: " << e.what() << "\n";
      return 2;
    }
  }
  if (!forced_subcommand.empty()) {
    if (config.contains("subcommand") &&
        config.at("subcommand").get<std::string>() != forced_subcommand) {
      std::cerr << "error: config subcommand '"
                << config.at("subcommand").get<std::string>()
                << "' does not match the invoked subcommand '"
                << forced_subcommand << "'\n";
      return 2;
    }
    config["subcommand"] = forced_subcommand;
  }
  if (flags.workers >= 0) config["workers"] = flags.workers;
  if (flags.seed_set) config["seed"] = flags.seed;

  const fkmc::RunResult result = fkmc::run_experiment(config);

  if (result.exit_code >= 2) {
    std::cerr << "error: " << result.output.value("error", "unknown") << "\n";
  }

  std::string payload;
  if (flags.format == "json") {
    payload = result.output.dump(2) + "\n";
  } else if (flags.format == "csv") {
    if (!result.has_csv) {
      std::cerr << "error: subcommand has no CSV table; use --format json\n";
      return 2;
    }
    payload = result.csv;
  } else {
    std::cerr << "error: --format must be csv or json\n";
    return 2;
  }

  if (flags.out_path.empty()) {
    std::cout << payload;
  } else {
    std::ofstream out(flags.out_path);
    if (!out) {
      std::cerr << "error: cannot write '" << flags.out_path << "'\n";
      return 2;
    }
    out << payload;
  }
  return result.exit_code;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool require_config = true) {
  auto* opt = cmd->add_option("--config", flags.config_path,
                              "experiment config file (JSON)");
  if (require_config) opt->required();
  cmd->add_option("--out", flags.out_path, "output path (default: stdout)");
  cmd->add_option("--format", flags.format, "output format: json|csv")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--workers", flags.workers,
                  "worker pool size (default: machine parallelism)");
  cmd->add_option("--seed", flags.seed, "64-bit seed override")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fkmc: Brownian-bridge Monte Carlo kernels for magnetic "
               "Schrodinger semigroups, with a lattice spectral oracle"};
  app.set_version_flag("--version", fkmc::kVersion);
  app.require_subcommand(1);

  CommonFlags flags;
  std::string chosen;

  // generic entry point: subcommand read from the config file
  auto* run = app.add_subcommand("run", "run the experiment named in the config");
  add_common(run, flags);
  run->callback([&]() { chosen = ""; });

  // one subcommand per check, mirroring the dispatcher
  for (const auto& name : fkmc::experiment_subcommands()) {
    auto* cmd = app.add_subcommand(name, "run the '" + name + "' experiment");
    add_common(cmd, flags);
    cmd->callback([&chosen, name]() { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  return execute(flags, chosen);
}
