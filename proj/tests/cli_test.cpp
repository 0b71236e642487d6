#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ess_cli/config.hpp"
#include "ess_cli/runner.hpp"

namespace ess::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("ess_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ConfigError::Kind kind_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "accepted: " << text;
  return ConfigError::Kind::kParse;
}

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"serverless_latency", "serverless_memory", "serverless_throughput", "serverless_macro",
                           "database", "security_suite"}) {
    const std::string text = slurp(fs::path(ESS_CONFIG_DIR) / (std::string(name) + ".conf"));
    ASSERT_FALSE(text.empty()) << name;
    ScenarioConfig c = parse_config(text);
    EXPECT_EQ(to_string(c.scenario), name);
  }
}

TEST(Config, ValuesAndDefaults) {
  ScenarioConfig c = parse_config(
      "# comment\n[serverless_throughput]\nseed = 4\nmodel = cc_cold, teemate\nworkload = sleep, uploader\n"
      "n_requests = 64\nt_alias = 3.0\nt_exec.sleep = 900\n");
  EXPECT_EQ(c.scenario, Scenario::kServerlessThroughput);
  EXPECT_EQ(c.seed, 4U);
  EXPECT_EQ(c.models, (std::vector<std::string>{"cc_cold", "teemate"}));
  EXPECT_EQ(c.workloads, (std::vector<std::string>{"sleep", "uploader"}));
  EXPECT_EQ(c.n_requests, 64U);
  EXPECT_DOUBLE_EQ(c.params.t_alias, 3.0);
  EXPECT_DOUBLE_EQ(c.params.exec_ms("sleep"), 900.0);

  ScenarioConfig all = parse_config("[serverless_latency]\nseed=1\nworkload=all\n");
  EXPECT_EQ(all.workloads, workload_names());

  ScenarioConfig db = parse_config("[database]\nseed=1\n");
  EXPECT_EQ(db.db_mib, (std::vector<double>{128, 256, 512}));
}

TEST(Config, Errors) {
  EXPECT_EQ(kind_of("[serverless_latency]\nseed=1\nbogus=2\n"), ConfigError::Kind::kUnknownKey);
  EXPECT_EQ(kind_of("[serverless_latency]\nn_requests=1\n"), ConfigError::Kind::kMissingKey);
  EXPECT_EQ(kind_of("[nowhere]\nseed=1\n"), ConfigError::Kind::kParse);
  EXPECT_EQ(kind_of("seed=1\n"), ConfigError::Kind::kParse);
  EXPECT_EQ(kind_of("[database]\nseed=1\nseed=2\n"), ConfigError::Kind::kParse);
  EXPECT_EQ(kind_of("[security_suite]\nseed=1\nt_alias=2\n"), ConfigError::Kind::kUnknownKey);
  EXPECT_EQ(kind_of("[serverless_latency]\nseed=1\nn_requests=-3\n"), ConfigError::Kind::kInvalidValue);
  EXPECT_EQ(kind_of("[serverless_latency]\nseed=1\nmodel=lukewarm\n"), ConfigError::Kind::kInvalidValue);
  EXPECT_EQ(kind_of("[serverless_latency]\nseed=1\nt_alias=0\n"), ConfigError::Kind::kInvalidValue);
}

TEST(Config, ErrorCarriesLine) {
  try {
    parse_config("[serverless_latency]\nseed = 1\n\nthis line has no equals\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.kind(), ConfigError::Kind::kParse);
    EXPECT_EQ(e.line(), 4U);
  }
}

TEST(Runner, WritesOutputsDeterministically) {
  ScenarioConfig c = parse_config("[serverless_throughput]\nseed=2\nworkload=crypto-aes\nn_requests=8\n");
  const fs::path a = scratch("a");
  const fs::path b = scratch("b");
  std::ostringstream log;
  ASSERT_EQ(run(c, a, log), kExitOk) << log.str();
  ASSERT_EQ(run(c, b, log), kExitOk) << log.str();
  for (const char* f : {"metrics.csv", "occupancy.csv", "summary.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const std::string csv = slurp(a / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,workload,request_id,arrival_ms,queue_wait,container_create,enclave_create,alias,tcs_acquire,"
            "epc_lock_wait,epc_expand,instance_load,exec,total_ms");
  auto j = nlohmann::json::parse(slurp(a / "summary.json"));
  EXPECT_EQ(j["scenario"], "serverless_throughput");
  EXPECT_EQ(j["seed"], 2);
  EXPECT_FALSE(j["comparisons"].empty());
}

TEST(Runner, SecurityScenarioSummary) {
  ScenarioConfig c = parse_config(
      "[security_suite]\nseed=1\nadversary_schedules=20\ntcs_schedules=20\nenv_swap_trials=5\n");
  const fs::path out = scratch("sec");
  std::ostringstream log;
  ASSERT_EQ(run(c, out, log), kExitOk) << log.str();
  auto j = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_FALSE(fs::exists(out / "occupancy.csv"));
}

TEST(Runner, InvalidRuntimeParametersExitAsInvariant) {
  ScenarioConfig c = parse_config("[serverless_latency]\nseed=1\nworkload=sleep\n");
  c.params.t_exec.erase("sleep");
  std::ostringstream log;
  EXPECT_EQ(run(c, scratch("bad"), log), kExitInvariant);
  EXPECT_FALSE(log.str().empty());
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string("\"") + ESS_SIMULATE_BIN + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Binary, ExitCodes) {
  const fs::path dir = scratch("bin");
  std::ofstream(dir / "bad.conf") << "[serverless_latency]\nseed=1\nnot_a_key=1\n";
  std::ofstream(dir / "ok.conf") << "[serverless_latency]\nseed=1\nworkload=sleep\nmodel=cc_cold,teemate\n";
  EXPECT_EQ(run_binary("simulate " + (dir / "bad.conf").string()), kExitConfigError);
  EXPECT_EQ(run_binary("simulate " + (dir / "missing.conf").string()), kExitConfigError);
  EXPECT_EQ(run_binary("simulate"), kExitConfigError);
  EXPECT_EQ(run_binary("simulate " + (dir / "ok.conf").string() + " --out " + (dir / "out").string()), kExitOk);
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.json"));

  // --seed overrides the file, and the output records it.
  EXPECT_EQ(run_binary("simulate " + (dir / "ok.conf").string() + " --seed 9 --out " + (dir / "s9").string()),
            kExitOk);
  auto j = nlohmann::json::parse(slurp(dir / "s9" / "summary.json"));
  EXPECT_EQ(j["seed"], 9);

  const std::string env = "ESS_OUT_DIR=" + (dir / "env").string() + " \"" + ESS_SIMULATE_BIN + "\" simulate " +
                          (dir / "ok.conf").string() + " >/dev/null 2>&1";
  EXPECT_EQ(std::system(env.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "env" / "metrics.csv"));
}

}  // namespace
}  // namespace ess::cli
