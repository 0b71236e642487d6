#pragma once

// The trusted runtime that lives inside a shared enclave. It keeps function
// instances apart with bounds-checked regions, owns an in-memory file system
// whose entries are integrity checked against digests held in the enclave,
// and implements fork-style sharing of a data extent with copy-on-write
// through a per-process software translation table.
//
// Enclave VA layout, starting at `base`:
//   [tcs pages][runtime pages][instance slots ...][data pool ...]

#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ess/host_kernel.hpp"
#include "ess/sgx_core.hpp"

namespace ess {

struct RuntimeLayout {
  Vpn base{0x1000};
  std::uint64_t tcs_count = 8;
  std::uint64_t runtime_pages = 8;
  std::uint64_t instance_slots = 64;
  std::uint64_t instance_region_pages = 16;
  std::uint64_t data_pool_pages = 0;

  std::uint64_t total_pages() const {
    return tcs_count + runtime_pages + instance_slots * instance_region_pages + data_pool_pages;
  }
  Vpn runtime_base() const { return base + tcs_count; }
  Vpn instance_base() const { return runtime_base() + runtime_pages; }
  Vpn data_pool_base() const { return instance_base() + instance_slots * instance_region_pages; }
};

EnclaveConfig runtime_enclave_config(EnclaveId id, const RuntimeLayout& layout);

enum class InstanceState { kLoaded, kRunning, kDone };

struct FunctionInstance {
  InstanceId id{};
  Pid owner_pid{};
  Vpn region_base{};
  std::uint64_t region_pages = 0;
  std::vector<Vpn> epc_pages;
  InstanceState state = InstanceState::kLoaded;
  std::uint64_t slot = 0;

  bool in_region(Vpn va) const {
    return va.value >= region_base.value && va.value - region_base.value < region_pages;
  }
};

struct FileRow {
  InstanceId owner{};
  Digest trusted_digest;
  std::optional<std::vector<std::byte>> content;
  bool dirty = false;
};

struct ForkPair {
  Pid parent_pid{};
  Pid child_pid{};
  Vpn child_tcs{};
  std::set<std::uint64_t> shared_pages;
  std::map<std::pair<Pid, std::uint64_t>, Ppn> private_copies;
  std::uint64_t dirty_count = 0;
  bool live = false;
};

class Runtime {
 public:
  // The enclave must already exist (ecreate) and be uninitialized.
  Runtime(Kernel& kernel, EnclaveId enclave, Pid initial_pid, RuntimeLayout layout);

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  // Registration phase: EADD TCS and runtime pages from a deterministic image,
  // EINIT, then record the mappings and TCS vas for later aliasing.
  Digest runtime_init(std::uint64_t image_seed = 0);
  bool initialized() const { return record_.has_value(); }

  const MappingRecord& mapping_record() const;
  TcsTable& tcs_table() { return tcs_table_; }
  const TcsTable& tcs_table() const { return tcs_table_; }
  EnclaveId enclave_id() const { return enclave_; }
  Pid initial_pid() const { return initial_pid_; }
  const RuntimeLayout& layout() const { return layout_; }

  // Alias the recorded runtime mapping into another container.
  void alias_into(Container& target);

  // --- enclave threads -----------------------------------------------------
  // Picks a TCS for `pid` and enters through the pid's own page table.
  Vpn enter(Pid pid);
  void leave(Vpn tcs_va);
  const EnclaveThread& thread(Vpn tcs_va) const;
  bool has_live_thread(Pid pid) const;

  // --- function instances --------------------------------------------------
  const FunctionInstance& instance_create(Pid owner_pid, std::uint64_t code_size_pages);
  void instance_start(InstanceId id);
  void instance_finish(InstanceId id);
  // Sandbox check, then hardware translation through the owner's page table.
  Ppn instance_access(InstanceId id, Vpn va, Access access) const;
  PageBytes instance_read(InstanceId id, Vpn va) const;
  void instance_write(InstanceId id, Vpn va, std::size_t offset, PageBytes bytes);
  void instance_destroy(InstanceId id);
  const FunctionInstance& instance(InstanceId id) const;
  std::size_t live_instances() const { return instances_.size(); }

  // --- file system ---------------------------------------------------------
  void fs_register(InstanceId owner, const std::string& name, std::span<const std::byte> trusted);
  std::vector<std::byte> fs_open(InstanceId caller, const std::string& name);
  std::vector<std::byte> fs_read(InstanceId caller, const std::string& name) const;
  void fs_write(InstanceId caller, const std::string& name, std::vector<std::byte> bytes);

  // --- shared data extent with copy-on-write fork --------------------------
  void create_data_extent(Pid owner, std::uint64_t pages);
  std::uint64_t data_pages() const { return data_pages_; }
  PageBytes data_read(Pid reader, std::uint64_t index) const;
  // Physical page behind `reader`'s view of `index`, via hardware translation.
  Ppn data_page(Pid reader, std::uint64_t index) const;
  // Only while no fork is live.
  void data_write(Pid writer, std::uint64_t index, std::size_t offset, PageBytes bytes);

  ForkPair fork_cow(Pid parent_pid, double now_ms);
  void cow_write(ForkPair& pair, Pid writer, std::uint64_t index, std::size_t offset,
                 PageBytes bytes);
  PageBytes cow_read(const ForkPair& pair, Pid reader, std::uint64_t index) const;
  // Digest of the child's view; the child then exits and its pages are freed.
  Digest snapshot(ForkPair& pair, Pid child);
  Digest data_digest(Pid reader) const;

 private:
  struct Session {
    Pid pid{};
    EnclaveThread thread;
  };

  FunctionInstance& instance_mut(InstanceId id);
  bool in_runtime_pages(Vpn va) const;
  Vpn alloc_pool_va();
  void free_pool_va(Vpn va);
  void release_data_ref(Vpn va);
  const std::vector<Vpn>& translation(Pid pid) const;
  Machine& machine() { return kernel_.machine(); }
  const Machine& machine() const { return kernel_.machine(); }

  Kernel& kernel_;
  EnclaveId enclave_;
  Pid initial_pid_;
  RuntimeLayout layout_;
  std::optional<MappingRecord> record_;
  TcsTable tcs_table_;
  std::map<Vpn, Session> sessions_;

  std::map<InstanceId, FunctionInstance> instances_;
  std::set<std::uint64_t> free_slots_;
  std::uint64_t next_instance_ = 1;

  std::map<std::string, FileRow> files_;

  std::uint64_t data_pages_ = 0;
  std::map<Pid, std::vector<Vpn>> translation_;
  std::unordered_map<Vpn, int> data_refs_;
  std::priority_queue<std::uint64_t, std::vector<std::uint64_t>, std::greater<>> free_pool_;
  std::uint64_t next_pool_ = 0;
  int live_forks_ = 0;
};

}  // namespace ess
