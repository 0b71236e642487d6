#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ess_cli/config.hpp"
#include "ess_cli/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Shared-enclave serverless and snapshot simulator"};
  app.require_subcommand(1);
  auto* simulate = app.add_subcommand("simulate", "Run the scenario described by a config file");
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  simulate->add_option("config", config_path, "Scenario config (key=value)")->required();
  simulate->add_option("--out", out_dir, "Output directory (default: $ESS_OUT_DIR or .)");
  simulate->add_option("--seed", seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : ess::cli::kExitConfigError;
  }

  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read " << config_path << '\n';
    return ess::cli::kExitConfigError;
  }
  std::stringstream text;
  text << in.rdbuf();

  ess::cli::ScenarioConfig config;
  try {
    config = ess::cli::parse_config(text.str());
  } catch (const ess::cli::ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return ess::cli::kExitConfigError;
  }
  if (seed) config.seed = *seed;

  if (out_dir.empty()) {
    const char* env = std::getenv("ESS_OUT_DIR");
    out_dir = env != nullptr && *env != '\0' ? env : ".";
  }
  return ess::cli::run(config, out_dir, std::cerr);
}
