#include "ess_cli/runner.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <string>

#include "ess/security_suite.hpp"
#include "ess/types.hpp"
#include "ess/workload_harness.hpp"

namespace ess::cli {
namespace {

using nlohmann::ordered_json;

constexpr std::array kServerlessColumns = {
    Component::kQueueWait, Component::kContainerCreate, Component::kEnclaveCreate,
    Component::kAlias,     Component::kTcsAcquire,      Component::kEpcLockWait,
    Component::kEpcExpand, Component::kInstanceLoad,    Component::kExec,
};
constexpr std::array kDatabaseColumns = {Component::kQueueWait, Component::kCowCopy, Component::kService};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double ratio(double a, double b) { return b != 0.0 ? a / b : 0.0; }

template <std::size_t N>
ordered_json mean_components(const Metrics& m, const std::array<Component, N>& cols) {
  ordered_json out = ordered_json::object();
  const auto& reqs = m.ledger.requests();
  for (Component c : cols) {
    double sum = 0.0;
    for (const RequestRecord& r : reqs) sum += r.component(c);
    out[std::string(to_string(c))] = reqs.empty() ? 0.0 : sum / static_cast<double>(reqs.size());
  }
  return out;
}

ordered_json base_stats(const Metrics& m) {
  return ordered_json{
      {"requests", m.request_count},          {"mean_latency_ms", m.mean_latency_ms},
      {"p50_ms", m.p50_ms},                   {"p95_ms", m.p95_ms},
      {"p99_ms", m.p99_ms},                   {"peak_epc_mib", m.peak_epc_mib},
      {"throughput_rps", m.throughput_rps},   {"completion_time_ms", m.completion_time_ms},
      {"setup_ms", m.setup_ms},               {"baseline_epc_mib", m.baseline_epc_mib},
  };
}

struct Outputs {
  std::ofstream metrics;
  std::ofstream occupancy;
};

void write_occupancy(std::ofstream& os, const std::string& label, const std::string& group, const Metrics& m) {
  for (const OccupancySample& s : m.ledger.timeline()) {
    os << label << ',' << group << ',' << num(s.time_ms) << ',' << num(s.epc_mib) << '\n';
  }
}

ordered_json run_serverless_scenario(const ScenarioConfig& c, Outputs& out) {
  out.metrics << "model,workload,request_id,arrival_ms";
  for (Component col : kServerlessColumns) out.metrics << ',' << to_string(col);
  out.metrics << ",total_ms\n";
  out.occupancy << "model,workload,time_ms,epc_mib\n";

  ordered_json runs = ordered_json::array();
  ordered_json comparisons = ordered_json::array();
  for (const std::string& workload : c.workloads) {
    RequestTrace trace = c.scenario == Scenario::kServerlessMacro
                             ? gen_poisson(c.rate_per_s, c.duration_s, c.seed, workload)
                             : gen_burst(c.n_requests, workload);
    std::vector<Metrics> results;
    for (const std::string& name : c.models) {
      ExecutionModel model;
      model.variant = parse_model(name);
      model.warm_keepalive_s = c.params.warm_keepalive_s;
      model.predict = c.predict;
      model.reuse_initial_container = c.reuse_initial_container;
      Metrics m = run_serverless(model, trace, c.params, c.workers);

      for (const RequestRecord& r : m.ledger.requests()) {
        out.metrics << name << ',' << workload << ',' << r.request_id << ',' << num(r.arrival_ms);
        for (Component col : kServerlessColumns) out.metrics << ',' << num(r.component(col));
        out.metrics << ',' << num(r.finish_ms - r.arrival_ms) << '\n';
      }
      write_occupancy(out.occupancy, name, workload, m);

      ordered_json run = {{"model", name}, {"workload", workload}};
      run.update(base_stats(m));
      run["mean_components_ms"] = mean_components(m, kServerlessColumns);
      runs.push_back(std::move(run));
      results.push_back(std::move(m));
    }
    const Metrics& base = results.front();
    for (std::size_t i = 1; i < results.size(); ++i) {
      const Metrics& m = results[i];
      ordered_json cmp = {
          {"workload", workload},
          {"model", c.models[i]},
          {"baseline", c.models.front()},
          {"latency_speedup", ratio(base.mean_latency_ms, m.mean_latency_ms)},
          {"throughput_ratio", ratio(m.throughput_rps, base.throughput_rps)},
          {"peak_epc_ratio", ratio(base.peak_epc_mib, m.peak_epc_mib)},
      };
      comparisons.push_back(std::move(cmp));
    }
  }
  return ordered_json{{"runs", runs}, {"comparisons", comparisons}};
}

ordered_json run_database_scenario(const ScenarioConfig& c, Outputs& out) {
  out.metrics << "model,db_mib,request_id,arrival_ms";
  for (Component col : kDatabaseColumns) out.metrics << ',' << to_string(col);
  out.metrics << ",total_ms\n";
  out.occupancy << "model,db_mib,time_ms,epc_mib\n";

  ordered_json runs = ordered_json::array();
  ordered_json comparisons = ordered_json::array();
  for (double db : c.db_mib) {
    std::vector<Metrics> results;
    for (const std::string& name : c.models) {
      DatabaseConfig dc;
      dc.model = parse_db_model(name);
      dc.db_mib = db;
      dc.write_ratio = c.write_ratio;
      dc.snapshot_interval_s = c.snapshot_interval_s;
      dc.duration_s = c.duration_s;
      dc.seed = c.seed;
      dc.burst_requests = c.burst_requests;
      dc.background_rate_per_s = c.background_rate_per_s;
      Metrics m = run_database(dc, c.params);

      const std::string db_label = num(db);
      for (const RequestRecord& r : m.ledger.requests()) {
        out.metrics << name << ',' << db_label << ',' << r.request_id << ',' << num(r.arrival_ms);
        for (Component col : kDatabaseColumns) out.metrics << ',' << num(r.component(col));
        out.metrics << ',' << num(r.finish_ms - r.arrival_ms) << '\n';
      }
      write_occupancy(out.occupancy, name, db_label, m);

      ordered_json snaps = ordered_json::array();
      for (const SnapshotStats& s : m.db->snapshots) {
        char digest[17];
        std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(s.digest.value));
        snaps.push_back({{"start_ms", s.start_ms},
                         {"fork_ms", s.fork_ms},
                         {"child_end_ms", s.child_end_ms},
                         {"window_end_ms", s.window_end_ms},
                         {"window_requests", s.window_requests},
                         {"window_throughput_rps", s.window_throughput_rps},
                         {"cow_pages", s.cow_pages},
                         {"digest", digest}});
      }
      ordered_json run = {{"model", name}, {"db_mib", db}};
      run.update(base_stats(m));
      run["mean_fork_ms"] = m.db->mean_fork_ms;
      run["mean_window_throughput_rps"] = m.db->mean_window_throughput_rps;
      run["snapshots"] = std::move(snaps);
      runs.push_back(std::move(run));
      results.push_back(std::move(m));
    }
    const Metrics& base = results.front();
    for (std::size_t i = 1; i < results.size(); ++i) {
      const Metrics& m = results[i];
      comparisons.push_back({
          {"db_mib", db},
          {"model", c.models[i]},
          {"baseline", c.models.front()},
          {"fork_latency_ratio", ratio(base.db->mean_fork_ms, m.db->mean_fork_ms)},
          {"window_throughput_ratio", ratio(m.db->mean_window_throughput_rps, base.db->mean_window_throughput_rps)},
          {"peak_memory_reduction", base.peak_epc_mib > 0.0 ? 1.0 - m.peak_epc_mib / base.peak_epc_mib : 0.0},
      });
    }
  }
  return ordered_json{{"runs", runs}, {"comparisons", comparisons}};
}

ordered_json run_security_scenario(const ScenarioConfig& c, Outputs& out, bool& passed) {
  SecurityConfig sc;
  sc.seed = c.seed;
  sc.adversary_schedules = c.adversary_schedules;
  sc.tcs_schedules = c.tcs_schedules;
  sc.env_swap_trials = c.env_swap_trials;
  sc.steps_per_schedule = c.steps_per_schedule;

  out.metrics << "probe,trials,attacks,detected,undetected,false_alarms,passed\n";
  ordered_json probes = ordered_json::array();
  passed = true;
  for (const ProbeResult& p : run_security_suite(sc)) {
    out.metrics << p.name << ',' << p.trials << ',' << p.attacks << ',' << p.detected << ',' << p.undetected << ','
                << p.false_alarms << ',' << (p.passed() ? "true" : "false") << '\n';
    probes.push_back({{"probe", p.name},
                      {"trials", p.trials},
                      {"attacks", p.attacks},
                      {"detected", p.detected},
                      {"undetected", p.undetected},
                      {"false_alarms", p.false_alarms},
                      {"passed", p.passed()}});
    passed = passed && p.passed();
  }
  return ordered_json{{"probes", probes}, {"passed", passed}};
}

}  // namespace

int run(const ScenarioConfig& config, const std::filesystem::path& out_dir, std::ostream& log) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    log << "error: cannot create output directory " << out_dir << ": " << ec.message() << '\n';
    return kExitConfigError;
  }
  Outputs out;
  out.metrics.open(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
  if (config.scenario != Scenario::kSecuritySuite) {
    out.occupancy.open(out_dir / "occupancy.csv", std::ios::binary | std::ios::trunc);
  }
  if (!out.metrics) {
    log << "error: cannot write into " << out_dir << '\n';
    return kExitConfigError;
  }

  ordered_json summary = {{"scenario", to_string(config.scenario)}, {"seed", config.seed}};
  int code = kExitOk;
  try {
    switch (config.scenario) {
      case Scenario::kDatabase:
        summary.update(run_database_scenario(config, out));
        break;
      case Scenario::kSecuritySuite: {
        bool passed = false;
        summary.update(run_security_scenario(config, out, passed));
        if (!passed) {
          log << "security suite: at least one probe missed an attack\n";
          code = kExitInvariant;
        }
        break;
      }
      default:
        summary.update(run_serverless_scenario(config, out));
        break;
    }
  } catch (const InvariantViolation& e) {
    log << "invariant violation: " << e.what() << '\n';
    summary["error"] = e.what();
    code = kExitInvariant;
  } catch (const Error& e) {
    log << "fault: " << e.what() << '\n';
    summary["error"] = e.what();
    code = kExitInvariant;
  }

  std::ofstream js(out_dir / "summary.json", std::ios::binary | std::ios::trunc);
  js << summary.dump(2) << '\n';
  if (!js || !out.metrics) {
    log << "error: writing outputs failed\n";
    return kExitConfigError;
  }
  return code;
}

}  // namespace ess::cli
