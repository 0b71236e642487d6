#pragma once

#include <filesystem>
#include <ostream>

#include "ess_cli/config.hpp"

namespace ess::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitInvariant = 2;

// Writes metrics.csv, occupancy.csv and summary.json into out_dir.
// Diagnostics go to `log`.
int run(const ScenarioConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace ess::cli
