#include "ess_cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "ess/types.hpp"
#include "ess/workload_harness.hpp"

namespace ess::cli {
namespace {

constexpr std::array<std::pair<std::string_view, Scenario>, 6> kScenarios = {{
    {"serverless_latency", Scenario::kServerlessLatency},
    {"serverless_memory", Scenario::kServerlessMemory},
    {"serverless_throughput", Scenario::kServerlessThroughput},
    {"serverless_macro", Scenario::kServerlessMacro},
    {"database", Scenario::kDatabase},
    {"security_suite", Scenario::kSecuritySuite},
}};

const std::set<std::string_view>& scenario_keys(Scenario s) {
  static const std::map<Scenario, std::set<std::string_view>> keys = {
      {Scenario::kServerlessLatency, {"model", "workload", "n_requests", "workers"}},
      {Scenario::kServerlessMemory, {"model", "workload", "n_requests", "workers"}},
      {Scenario::kServerlessThroughput, {"model", "workload", "n_requests", "workers", "predict"}},
      {Scenario::kServerlessMacro,
       {"model", "workload", "rate_per_s", "duration_s", "workers", "predict", "reuse_initial_container"}},
      {Scenario::kDatabase,
       {"model", "db_mib", "write_ratio", "snapshot_interval_s", "duration_s", "burst_requests",
        "background_rate_per_s"}},
      {Scenario::kSecuritySuite, {"adversary_schedules", "tcs_schedules", "env_swap_trials", "steps_per_schedule"}},
  };
  return keys.at(s);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  while (true) {
    auto comma = v.find(',');
    auto item = trim(v.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

ConfigError invalid(std::size_t line, std::string_view key, const std::string& why) {
  return ConfigError(ConfigError::Kind::kInvalidValue, line, std::string(key) + ": " + why);
}

double to_double(std::size_t line, std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw invalid(line, key, "expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_uint(std::size_t line, std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw invalid(line, key, "expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::size_t line, std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw invalid(line, key, "expected true or false");
}

void apply_defaults(ScenarioConfig& c) {
  switch (c.scenario) {
    case Scenario::kServerlessLatency:
      c.models = {"cc_cold", "teemate"};
      c.workloads = workload_names();
      c.n_requests = 1;
      break;
    case Scenario::kServerlessMemory:
      c.models = {"cc_cold", "teemate"};
      c.workloads = {"crypto-aes"};
      c.n_requests = 64;
      // Peak residency is measured with every request in flight at once.
      c.params.epc_alloc_serialized = false;
      break;
    case Scenario::kServerlessThroughput:
      c.models = {"cc_cold", "teemate"};
      c.workloads = {"crypto-aes"};
      c.n_requests = 8;
      break;
    case Scenario::kServerlessMacro:
      c.models = {"cc_cold", "cc_warm", "teemate"};
      c.workloads = {"dynamic-html"};
      break;
    case Scenario::kDatabase:
      c.models = {"strawman", "teemate"};
      c.db_mib = {128.0, 256.0, 512.0};
      break;
    case Scenario::kSecuritySuite:
      break;
  }
}

}  // namespace

std::string_view to_string(Scenario s) {
  for (const auto& [name, value] : kScenarios) {
    if (value == s) return name;
  }
  return "unknown";
}

ConfigError::ConfigError(Kind kind, std::size_t line, const std::string& what)
    : std::runtime_error((line != 0 ? "line " + std::to_string(line) + ": " : std::string()) + what),
      kind_(kind),
      line_(line) {}

ScenarioConfig parse_config(std::string_view text) {
  ScenarioConfig c;
  std::optional<Scenario> scenario;
  std::set<std::string> seen;
  bool workers_set = false;
  std::size_t line_no = 0;

  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view raw = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;

    auto hash = raw.find('#');
    std::string_view line = trim(raw.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(ConfigError::Kind::kParse, line_no, "unterminated section header");
      if (scenario) throw ConfigError(ConfigError::Kind::kParse, line_no, "only one scenario section is allowed");
      std::string_view name = trim(line.substr(1, line.size() - 2));
      auto it = std::find_if(kScenarios.begin(), kScenarios.end(), [&](const auto& kv) { return kv.first == name; });
      if (it == kScenarios.end()) {
        throw ConfigError(ConfigError::Kind::kParse, line_no, "unknown scenario '" + std::string(name) + "'");
      }
      scenario = it->second;
      c.scenario = *scenario;
      apply_defaults(c);
      continue;
    }

    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(ConfigError::Kind::kParse, line_no, "expected key=value");
    if (!scenario) throw ConfigError(ConfigError::Kind::kParse, line_no, "key before scenario section");
    std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(ConfigError::Kind::kParse, line_no, "empty key");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(ConfigError::Kind::kParse, line_no, "duplicate key '" + std::string(key) + "'");
    }

    if (key == "seed") {
      c.seed = to_uint(line_no, key, value);
      continue;
    }
    if (!scenario_keys(c.scenario).contains(key)) {
      bool cost_key = c.scenario != Scenario::kSecuritySuite && CostParams::is_key(key);
      if (!cost_key) {
        throw ConfigError(ConfigError::Kind::kUnknownKey, line_no,
                          "unknown key '" + std::string(key) + "' for " + std::string(to_string(c.scenario)));
      }
      try {
        c.params.set(key, value);
      } catch (const Error& e) {
        throw invalid(line_no, key, e.what());
      }
      continue;
    }

    if (key == "model") {
      c.models = split_list(value);
      if (c.models.empty()) throw invalid(line_no, key, "empty model list");
      std::set<std::string> unique(c.models.begin(), c.models.end());
      if (unique.size() != c.models.size()) throw invalid(line_no, key, "duplicate model");
      for (const std::string& m : c.models) {
        try {
          if (c.scenario == Scenario::kDatabase) {
            parse_db_model(m);
          } else {
            parse_model(m);
          }
        } catch (const Error& e) {
          throw invalid(line_no, key, e.what());
        }
      }
    } else if (key == "workload") {
      c.workloads = value == "all" ? workload_names() : split_list(value);
      if (c.workloads.empty()) throw invalid(line_no, key, "empty workload list");
    } else if (key == "n_requests") {
      c.n_requests = to_uint(line_no, key, value);
      if (c.n_requests == 0) throw invalid(line_no, key, "must be >= 1");
    } else if (key == "workers") {
      c.workers = to_uint(line_no, key, value);
      if (c.workers == 0) throw invalid(line_no, key, "must be >= 1");
      workers_set = true;
    } else if (key == "rate_per_s") {
      c.rate_per_s = to_double(line_no, key, value);
      if (!(c.rate_per_s > 0.0)) throw invalid(line_no, key, "must be > 0");
    } else if (key == "duration_s") {
      c.duration_s = to_double(line_no, key, value);
      if (c.duration_s < 0.0) throw invalid(line_no, key, "must be >= 0");
    } else if (key == "predict") {
      c.predict = to_bool(line_no, key, value);
    } else if (key == "reuse_initial_container") {
      c.reuse_initial_container = to_bool(line_no, key, value);
    } else if (key == "db_mib") {
      c.db_mib.clear();
      for (const std::string& item : split_list(value)) {
        double v = to_double(line_no, key, item);
        if (!(v > 0.0)) throw invalid(line_no, key, "must be > 0");
        c.db_mib.push_back(v);
      }
      if (c.db_mib.empty()) throw invalid(line_no, key, "empty list");
    } else if (key == "write_ratio") {
      c.write_ratio = to_double(line_no, key, value);
      if (c.write_ratio < 0.0 || c.write_ratio > 1.0) throw invalid(line_no, key, "must lie in [0, 1]");
    } else if (key == "snapshot_interval_s") {
      c.snapshot_interval_s = to_double(line_no, key, value);
      if (!(c.snapshot_interval_s > 0.0)) throw invalid(line_no, key, "must be > 0");
    } else if (key == "burst_requests") {
      c.burst_requests = to_uint(line_no, key, value);
    } else if (key == "background_rate_per_s") {
      c.background_rate_per_s = to_double(line_no, key, value);
      if (c.background_rate_per_s < 0.0) throw invalid(line_no, key, "must be >= 0");
    } else if (key == "adversary_schedules") {
      c.adversary_schedules = to_uint(line_no, key, value);
    } else if (key == "tcs_schedules") {
      c.tcs_schedules = to_uint(line_no, key, value);
    } else if (key == "env_swap_trials") {
      c.env_swap_trials = to_uint(line_no, key, value);
    } else if (key == "steps_per_schedule") {
      c.steps_per_schedule = to_uint(line_no, key, value);
    }
  }

  if (!scenario) throw ConfigError(ConfigError::Kind::kParse, 0, "no scenario section");
  if (!seen.contains("seed")) throw ConfigError(ConfigError::Kind::kMissingKey, 0, "missing required key 'seed'");
  if (c.scenario == Scenario::kDatabase && !seen.contains("duration_s")) c.duration_s = c.snapshot_interval_s;
  if (c.scenario == Scenario::kServerlessMemory && !workers_set) c.workers = c.n_requests;

  for (const std::string& w : c.workloads) {
    if (!c.params.t_exec.contains(w)) {
      throw ConfigError(ConfigError::Kind::kInvalidValue, 0, "workload '" + w + "' has no t_exec entry");
    }
  }
  try {
    c.params.validate();
  } catch (const Error& e) {
    throw ConfigError(ConfigError::Kind::kInvalidValue, 0, e.what());
  }
  return c;
}

}  // namespace ess::cli
