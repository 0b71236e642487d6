#pragma once

// Simulated latency and EPC occupancy. Durations are milliseconds and memory
// is MiB throughout.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ess {

struct CostParams {
  // Serverless path.
  double t_container_create = 585.0;
  double t_enclave_create = 10000.0;
  // Portion of enclave creation spent allocating EPC under the driver lock.
  double t_enclave_epc_locked = 1000.0;
  double t_alias = 2.7;
  double t_tcs_op = 0.3;
  double t_epc_alloc_per_page = 0.1109375;
  double t_instance_load_cold = 117.5;
  double t_instance_load_teemate = 235.0;
  std::map<std::string, double> t_exec;
  bool epc_alloc_serialized = true;
  double warm_keepalive_s = 30.0;

  double m_strawman_per_request = 114.0;
  // Footprint of a registered runtime serving exactly one request.
  double m_teemate_base = 207.0;
  double m_teemate_per_instance = 25.0;
  double page_mib = 4096.0 / (1024.0 * 1024.0);

  // Database path.
  double t_fork_process = 60.0;
  double copy_rate_ms_per_mib = 100.0;
  double t_db_request = 1.0;
  double t_page_copy = 0.01;
  double t_snapshot_per_mib = 5.0;
  double m_db_runtime_base = 64.0;
  double db_translation_overhead = 0.1;
  double m_db_thread = 32.0;

  std::uint64_t instance_pages() const;
  double epc_expand_ms() const { return static_cast<double>(instance_pages()) * t_epc_alloc_per_page; }
  double exec_ms(const std::string& workload) const;
  double t_fork_strawman(double db_mib) const { return t_enclave_create + copy_rate_ms_per_mib * db_mib; }
  double t_fork_teemate() const { return t_fork_process + t_alias + t_tcs_op; }

  // Throws Error(kInvalidArgument) on the first non-positive value.
  void validate() const;
  // `key` is a field name or `t_exec.<workload>`. Throws kNotFound for
  // unknown keys and kInvalidArgument for malformed values.
  void set(std::string_view key, std::string_view value);
  static bool is_key(std::string_view key);
};

CostParams default_params();
const std::vector<std::string>& workload_names();

enum class Component : std::uint8_t {
  kQueueWait,
  kContainerCreate,
  kEnclaveCreate,
  kAlias,
  kTcsAcquire,
  kEpcLockWait,
  kEpcExpand,
  kInstanceLoad,
  kExec,
  kCowCopy,
  kService,
};
inline constexpr std::size_t kComponentCount = 11;

std::string_view to_string(Component c);

struct RequestRecord {
  std::uint64_t request_id = 0;
  double arrival_ms = 0.0;
  double finish_ms = 0.0;
  std::array<double, kComponentCount> ms{};

  double component(Component c) const { return ms[static_cast<std::size_t>(c)]; }
  double total() const;
};

struct OccupancySample {
  double time_ms;
  double epc_mib;
};

class CostLedger {
 public:
  std::size_t open_request(std::uint64_t request_id, double arrival_ms);
  // Throws Error(kNegativeDuration).
  void charge(std::size_t request, Component c, double ms);
  void close_request(std::size_t request, double finish_ms);

  // Throws Error(kNegativeOccupancy) if the level would drop below zero.
  void occupy(double time_ms, double delta_mib);

  const std::vector<RequestRecord>& requests() const { return requests_; }
  const RequestRecord& request(std::size_t i) const { return requests_.at(i); }
  const std::vector<OccupancySample>& timeline() const { return timeline_; }
  double occupancy() const { return level_; }
  double peak_epc() const { return peak_; }

 private:
  std::vector<RequestRecord> requests_;
  std::vector<OccupancySample> timeline_;
  double level_ = 0.0;
  double peak_ = 0.0;
};

}  // namespace ess
