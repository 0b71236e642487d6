#pragma once

// Flat experiment configuration: one bracketed scenario section followed by
// key=value lines. '#' starts a comment.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ess/cost_model.hpp"

namespace ess::cli {

enum class Scenario {
  kServerlessLatency,
  kServerlessMemory,
  kServerlessThroughput,
  kServerlessMacro,
  kDatabase,
  kSecuritySuite,
};

std::string_view to_string(Scenario s);

class ConfigError : public std::runtime_error {
 public:
  enum class Kind { kParse, kUnknownKey, kMissingKey, kInvalidValue };

  ConfigError(Kind kind, std::size_t line, const std::string& what);
  Kind kind() const { return kind_; }
  // 1-based; 0 when the problem is not tied to a line.
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::kServerlessLatency;
  std::uint64_t seed = 0;
  // First entry is the baseline for ratios.
  std::vector<std::string> models;
  std::vector<std::string> workloads;
  std::size_t n_requests = 1;
  std::size_t workers = 8;
  double rate_per_s = 1.0;
  double duration_s = 600.0;
  bool predict = false;
  bool reuse_initial_container = false;

  std::vector<double> db_mib;
  double write_ratio = 0.3;
  double snapshot_interval_s = 20.0;
  std::size_t burst_requests = 10000;
  double background_rate_per_s = 0.0;

  std::size_t adversary_schedules = 1000;
  std::size_t tcs_schedules = 1000;
  std::size_t env_swap_trials = 200;
  std::size_t steps_per_schedule = 24;

  CostParams params = default_params();
};

ScenarioConfig parse_config(std::string_view text);

}  // namespace ess::cli
