#pragma once

// Discrete-event drivers for the serverless execution models and the
// snapshotting key-value store. Every simulated request also exercises the
// functional machine (containers, enclaves, aliasing, TCS, instances) at a
// reduced page count; latency and EPC occupancy come from CostParams.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ess/cost_model.hpp"
#include "ess/measurement.hpp"

namespace ess {

// A harness-level consistency check failed. Distinct from ess::Error so the
// CLI can map it to its own exit code.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { kNative, kCcCold, kCcWarm, kTeeMate };

std::string_view to_string(ModelKind m);
// Accepts native, cc_cold, cc_warm, teemate. Throws Error(kNotFound).
ModelKind parse_model(std::string_view name);

struct ExecutionModel {
  ModelKind variant = ModelKind::kTeeMate;
  double warm_keepalive_s = 30.0;
  // CC_WARM only: every request is predicted, so an environment per worker
  // is built before the trace starts and never expires.
  bool predict = false;
  // TEEMATE only: serve from the registering container when it is idle
  // instead of always spawning a fresh one.
  bool reuse_initial_container = false;
};

struct Arrival {
  double time_ms = 0.0;
  std::string workload;
};

struct RequestTrace {
  std::vector<Arrival> arrivals;
  std::uint64_t seed = 0;
};

RequestTrace gen_burst(std::size_t n, const std::string& workload);
// Exponential gaps by inverse CDF on mt19937_64; arrivals inside [0, duration].
RequestTrace gen_poisson(double rate_per_s, double duration_s, std::uint64_t seed,
                         const std::string& workload);

struct SnapshotStats {
  double start_ms = 0.0;
  double fork_ms = 0.0;
  double child_end_ms = 0.0;
  double window_end_ms = 0.0;
  std::size_t window_requests = 0;
  double window_throughput_rps = 0.0;
  std::uint64_t cow_pages = 0;
  Digest digest;
};

struct DatabaseStats {
  double db_mib = 0.0;
  std::vector<SnapshotStats> snapshots;
  double mean_fork_ms = 0.0;
  double mean_window_throughput_rps = 0.0;
  double baseline_mib = 0.0;
};

struct Metrics {
  CostLedger ledger;
  std::size_t request_count = 0;
  double mean_latency_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  double peak_epc_mib = 0.0;
  double completion_time_ms = 0.0;
  double throughput_rps = 0.0;
  // Work done ahead of the trace (runtime registration, predicted warm-up).
  double setup_ms = 0.0;
  double baseline_epc_mib = 0.0;
  std::optional<DatabaseStats> db;
};

Metrics run_serverless(const ExecutionModel& model, const RequestTrace& trace,
                       const CostParams& params, std::size_t workers = 8);

enum class DbModel { kStrawman, kTeeMate };

std::string_view to_string(DbModel m);
DbModel parse_db_model(std::string_view name);

struct DatabaseConfig {
  DbModel model = DbModel::kTeeMate;
  double db_mib = 128.0;
  double write_ratio = 0.3;
  double snapshot_interval_s = 20.0;
  double duration_s = 20.0;
  std::uint64_t seed = 1;
  // Requests arriving together at each snapshot instant.
  std::size_t burst_requests = 10000;
  // Optional steady Poisson load on top of the bursts.
  double background_rate_per_s = 0.0;
};

Metrics run_database(const DatabaseConfig& config, const CostParams& params);

}  // namespace ess
