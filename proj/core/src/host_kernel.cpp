#include "ess/host_kernel.hpp"

#include <algorithm>

namespace ess {

TcsTable::TcsTable(const std::vector<Vpn>& tcs_vas) {
  rows_.reserve(tcs_vas.size());
  for (Vpn va : tcs_vas) {
    bool dup = std::any_of(rows_.begin(), rows_.end(), [va](const Row& r) { return r.tcs_va == va; });
    if (dup) throw Error(Errc::kInvalidArgument, "duplicate TCS va");
    rows_.push_back(Row{va, std::nullopt});
  }
}

Vpn TcsTable::acquire(Pid pid) {
  for (Row& row : rows_) {
    if (!row.holder) {
      row.holder = pid;
      return row.tcs_va;
    }
  }
  throw Error(Errc::kNoFreeTcs, "pid " + std::to_string(pid.value));
}

void TcsTable::release(Vpn tcs_va) {
  auto it = std::find_if(rows_.begin(), rows_.end(), [tcs_va](const Row& r) { return r.tcs_va == tcs_va; });
  if (it == rows_.end() || !it->holder) {
    throw Error(Errc::kNotHeld, "tcs " + std::to_string(tcs_va.value));
  }
  it->holder.reset();
}

bool TcsTable::all_available() const {
  return std::none_of(rows_.begin(), rows_.end(), [](const Row& r) { return r.holder.has_value(); });
}

std::size_t TcsTable::free_count() const {
  return static_cast<std::size_t>(
      std::count_if(rows_.begin(), rows_.end(), [](const Row& r) { return !r.holder; }));
}

std::optional<Pid> TcsTable::holder(Vpn tcs_va) const {
  for (const Row& row : rows_) {
    if (row.tcs_va == tcs_va) return row.holder;
  }
  throw Error(Errc::kNotFound, "tcs " + std::to_string(tcs_va.value));
}

Container& Kernel::create_container(std::string fs_root, double now_ms) {
  Pid pid{next_pid_++};
  Container c;
  c.pid = pid;
  c.fs_root = std::move(fs_root);
  c.created_at_ms = now_ms;
  return containers_.emplace(pid, std::move(c)).first->second;
}

void Kernel::destroy_container(Pid pid) {
  if (containers_.erase(pid) == 0) throw Error(Errc::kUnknownPid, std::to_string(pid.value));
  env_override_.erase(pid);
}

Container& Kernel::container(Pid pid) {
  return const_cast<Container&>(std::as_const(*this).container(pid));
}

const Container& Kernel::container(Pid pid) const {
  auto it = containers_.find(pid);
  if (it == containers_.end()) throw Error(Errc::kUnknownPid, std::to_string(pid.value));
  return it->second;
}

EaddResult Kernel::add_enclave_page(Pid owner, EnclaveId id, Vpn va, PageBytes content,
                                    PageType type, std::uint64_t oentry) {
  Container& c = container(owner);
  if (c.address_space.contains(va)) throw Error(Errc::kVaConflict, std::to_string(va.value));
  EaddResult result = machine_.eadd(id, va, content, type, oentry);
  c.address_space.map(va, result.pa);
  return result;
}

void Kernel::remove_enclave_page(EnclaveId id, Vpn va) {
  Ppn pa = machine_.eremove(id, va);
  for (auto& [pid, c] : containers_) {
    if (auto mapped = c.address_space.lookup(va); mapped && *mapped == pa) {
      c.address_space.unmap(va);
    }
  }
}

MappingRecord Kernel::record_enclave_mappings(EnclaveId id) const {
  const Enclave& e = machine_.enclave(id);
  if (!e.initialized) throw Error(Errc::kEnclaveNotInitialized, std::to_string(id.value));
  MappingRecord record{id, {}};
  record.entries.assign(e.pages.begin(), e.pages.end());
  return record;
}

void Kernel::alias_enclave(Container& target, const MappingRecord& record) {
  for (const auto& [va, pa] : record.entries) {
    if (target.address_space.contains(va)) {
      throw Error(Errc::kVaConflict, "pid " + std::to_string(target.pid.value) + " va " +
                                         std::to_string(va.value));
    }
  }
  for (const auto& [va, pa] : record.entries) target.address_space.map(va, pa);
}

void Kernel::host_fs_put(const std::string& fs_root, const std::string& name,
                         std::vector<std::byte> bytes) {
  host_fs_[{fs_root, name}] = std::move(bytes);
}

std::optional<std::vector<std::byte>> Kernel::host_fs_get(const std::string& fs_root,
                                                          const std::string& name) const {
  auto it = host_fs_.find({fs_root, name});
  if (it == host_fs_.end()) return std::nullopt;
  return it->second;
}

std::string Kernel::entry_environment(Pid pid) const {
  if (auto it = env_override_.find(pid); it != env_override_.end()) return it->second;
  return container(pid).fs_root;
}

void Kernel::adversary_swap_environment(Pid pid, std::string wrong_fs_root) {
  env_override_[pid] = std::move(wrong_fs_root);
}

}  // namespace ess
