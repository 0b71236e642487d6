#pragma once

// The untrusted host: containers with private page tables, the controller's
// aliasing and TCS bookkeeping, and the adversary's page-table and
// environment tampering. Nothing in here is trusted by the enclave.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ess/address_space.hpp"
#include "ess/sgx_core.hpp"

namespace ess {

struct Container {
  Pid pid{};
  AddressSpace address_space;
  std::string fs_root;
  double created_at_ms = 0.0;
};

struct MappingRecord {
  EnclaveId enclave_id{};
  std::vector<std::pair<Vpn, Ppn>> entries;
};

// Controller-side view of which container holds which TCS.
class TcsTable {
 public:
  struct Row {
    Vpn tcs_va{};
    std::optional<Pid> holder;
  };

  TcsTable() = default;
  explicit TcsTable(const std::vector<Vpn>& tcs_vas);

  // Lowest-indexed free row wins.
  Vpn acquire(Pid pid);
  void release(Vpn tcs_va);

  bool all_available() const;
  std::size_t free_count() const;
  std::optional<Pid> holder(Vpn tcs_va) const;
  const std::vector<Row>& rows() const { return rows_; }

 private:
  std::vector<Row> rows_;
};

class Kernel {
 public:
  explicit Kernel(Machine& machine) : machine_(machine) {}

  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  Container& create_container(std::string fs_root, double now_ms);
  void destroy_container(Pid pid);
  Container& container(Pid pid);
  const Container& container(Pid pid) const;
  bool has_container(Pid pid) const { return containers_.contains(pid); }
  std::size_t container_count() const { return containers_.size(); }

  // Steps 1-3 of enclave page setup: map va -> pa in the owner's table,
  // then EADD.
  EaddResult add_enclave_page(Pid owner, EnclaveId id, Vpn va, PageBytes content,
                              PageType type, std::uint64_t oentry = 0);
  // EREMOVE plus unmapping (va -> pa) from every container that maps it.
  void remove_enclave_page(EnclaveId id, Vpn va);

  MappingRecord record_enclave_mappings(EnclaveId id) const;
  void alias_enclave(Container& target, const MappingRecord& record);

  // Host-side files, keyed by namespace label. Untrusted storage.
  void host_fs_put(const std::string& fs_root, const std::string& name, std::vector<std::byte> bytes);
  std::optional<std::vector<std::byte>> host_fs_get(const std::string& fs_root,
                                                    const std::string& name) const;

  // The namespace label an enclave entry by `pid` runs under.
  std::string entry_environment(Pid pid) const;

  // --- adversary -----------------------------------------------------------
  static void adversary_remap(AddressSpace& space, Vpn va, Ppn wrong_pa) { space.map(va, wrong_pa); }
  void adversary_swap_environment(Pid pid, std::string wrong_fs_root);
  void clear_environment_swap(Pid pid) { env_override_.erase(pid); }

  Machine& machine() { return machine_; }
  const Machine& machine() const { return machine_; }

 private:
  Machine& machine_;
  std::map<Pid, Container> containers_;
  std::map<Pid, std::string> env_override_;
  std::map<std::pair<std::string, std::string>, std::vector<std::byte>> host_fs_;
  std::uint64_t next_pid_ = 1;
};

}  // namespace ess
