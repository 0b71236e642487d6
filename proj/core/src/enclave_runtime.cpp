#include "ess/enclave_runtime.hpp"

#include <algorithm>
#include <array>

namespace ess {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31U);
}

std::vector<std::byte> image_page(std::uint64_t seed, std::uint64_t index) {
  std::vector<std::byte> page(kPageSize);
  std::uint64_t state = seed * 0x100000001b3ULL + index;
  for (std::size_t off = 0; off < kPageSize; off += 8) {
    std::uint64_t word = splitmix64(state);
    for (std::size_t b = 0; b < 8; ++b) page[off + b] = static_cast<std::byte>((word >> (8 * b)) & 0xffU);
  }
  return page;
}

std::string id_str(std::uint64_t v) { return std::to_string(v); }

}  // namespace

EnclaveConfig runtime_enclave_config(EnclaveId id, const RuntimeLayout& layout) {
  return EnclaveConfig{id, layout.base, layout.total_pages()};
}

Runtime::Runtime(Kernel& kernel, EnclaveId enclave, Pid initial_pid, RuntimeLayout layout)
    : kernel_(kernel), enclave_(enclave), initial_pid_(initial_pid), layout_(layout) {
  for (std::uint64_t s = 0; s < layout_.instance_slots; ++s) free_slots_.insert(s);
}

Digest Runtime::runtime_init(std::uint64_t image_seed) {
  const Enclave& e = machine().enclave(enclave_);
  if (e.initialized) throw Error(Errc::kAlreadyInitialized, id_str(enclave_.value));
  if (e.size_pages < layout_.total_pages()) {
    throw Error(Errc::kInvalidArgument, "enclave smaller than runtime layout");
  }

  const std::uint64_t oentry = layout_.runtime_base().value;
  std::vector<Vpn> tcs_vas;
  for (std::uint64_t i = 0; i < layout_.tcs_count; ++i) {
    Vpn va = layout_.base + i;
    std::array<std::byte, 8> tcs_content{};
    for (int b = 0; b < 8; ++b) tcs_content[b] = static_cast<std::byte>((oentry >> (8 * b)) & 0xffU);
    kernel_.add_enclave_page(initial_pid_, enclave_, va, tcs_content, PageType::kTcs, oentry);
    tcs_vas.push_back(va);
  }
  for (std::uint64_t i = 0; i < layout_.runtime_pages; ++i) {
    kernel_.add_enclave_page(initial_pid_, enclave_, layout_.runtime_base() + i,
                             image_page(image_seed, i), PageType::kRegular);
  }
  Digest digest = machine().einit(enclave_);
  record_ = kernel_.record_enclave_mappings(enclave_);
  tcs_table_ = TcsTable(tcs_vas);
  return digest;
}

const MappingRecord& Runtime::mapping_record() const {
  if (!record_) throw Error(Errc::kEnclaveNotInitialized, id_str(enclave_.value));
  return *record_;
}

void Runtime::alias_into(Container& target) { kernel_.alias_enclave(target, mapping_record()); }

// --- threads -----------------------------------------------------------------

Vpn Runtime::enter(Pid pid) {
  const Container& c = kernel_.container(pid);
  Vpn tcs_va = tcs_table_.acquire(pid);
  try {
    EnclaveThread t = machine().eenter(c.address_space, tcs_va);
    sessions_[tcs_va] = Session{pid, t};
  } catch (...) {
    tcs_table_.release(tcs_va);
    throw;
  }
  return tcs_va;
}

void Runtime::leave(Vpn tcs_va) {
  auto it = sessions_.find(tcs_va);
  if (it == sessions_.end()) throw Error(Errc::kThreadNotLive, id_str(tcs_va.value));
  machine().eexit(it->second.thread);
  sessions_.erase(it);
  tcs_table_.release(tcs_va);
}

const EnclaveThread& Runtime::thread(Vpn tcs_va) const {
  auto it = sessions_.find(tcs_va);
  if (it == sessions_.end()) throw Error(Errc::kThreadNotLive, id_str(tcs_va.value));
  return it->second.thread;
}

bool Runtime::has_live_thread(Pid pid) const {
  return std::any_of(sessions_.begin(), sessions_.end(), [&](const auto& kv) {
    return kv.second.pid == pid && machine().is_live(kv.second.thread);
  });
}

// --- instances ---------------------------------------------------------------

const FunctionInstance& Runtime::instance_create(Pid owner_pid, std::uint64_t code_size_pages) {
  if (!machine().enclave(enclave_).initialized) {
    throw Error(Errc::kEnclaveNotInitialized, id_str(enclave_.value));
  }
  if (code_size_pages > layout_.instance_region_pages) {
    throw Error(Errc::kInvalidArgument, "instance larger than its region");
  }
  if (free_slots_.empty()) throw Error(Errc::kRegionExhausted, "no free instance region");
  kernel_.container(owner_pid);

  const std::uint64_t slot = *free_slots_.begin();
  FunctionInstance inst;
  inst.id = InstanceId{next_instance_};
  inst.owner_pid = owner_pid;
  inst.slot = slot;
  inst.region_pages = layout_.instance_region_pages;
  inst.region_base = layout_.instance_base() + slot * layout_.instance_region_pages;
  try {
    for (std::uint64_t i = 0; i < code_size_pages; ++i) {
      Vpn va = inst.region_base + i;
      kernel_.add_enclave_page(owner_pid, enclave_, va, {}, PageType::kRegular);
      inst.epc_pages.push_back(va);
    }
  } catch (...) {
    for (Vpn va : inst.epc_pages) kernel_.remove_enclave_page(enclave_, va);
    throw;
  }
  ++next_instance_;
  free_slots_.erase(slot);
  return instances_.emplace(inst.id, std::move(inst)).first->second;
}

FunctionInstance& Runtime::instance_mut(InstanceId id) {
  auto it = instances_.find(id);
  if (it == instances_.end()) throw Error(Errc::kNotFound, "instance " + id_str(id.value));
  return it->second;
}

const FunctionInstance& Runtime::instance(InstanceId id) const {
  return const_cast<Runtime*>(this)->instance_mut(id);
}

void Runtime::instance_start(InstanceId id) {
  FunctionInstance& inst = instance_mut(id);
  if (inst.state != InstanceState::kLoaded) throw Error(Errc::kBadState, "instance not loaded");
  inst.state = InstanceState::kRunning;
}

void Runtime::instance_finish(InstanceId id) {
  FunctionInstance& inst = instance_mut(id);
  if (inst.state != InstanceState::kRunning) throw Error(Errc::kBadState, "instance not running");
  inst.state = InstanceState::kDone;
}

bool Runtime::in_runtime_pages(Vpn va) const {
  return va.value >= layout_.runtime_base().value &&
         va.value - layout_.runtime_base().value < layout_.runtime_pages;
}

Ppn Runtime::instance_access(InstanceId id, Vpn va, Access access) const {
  const FunctionInstance& inst = instance(id);
  if (inst.state == InstanceState::kDone) throw Error(Errc::kBadState, "instance finished");
  if (!inst.in_region(va)) {
    // Runtime pages are shared read-only.
    if (!in_runtime_pages(va) || access == Access::kWrite) {
      throw Error(Errc::kIsolationFault,
                  "instance " + id_str(id.value) + " va " + id_str(va.value));
    }
  }
  const AddressSpace& space = kernel_.container(inst.owner_pid).address_space;
  Translation t = machine().translate(space, va, access, CpuMode::enclave_mode(enclave_));
  if (!t.ok()) throw Error(t.fault(), "va " + id_str(va.value));
  // Enclave-private addresses must be backed by EPC; a regular page here
  // means the kernel rewired the mapping.
  if (!t.epc()) throw Error(Errc::kNonEpcMapping, "va " + id_str(va.value));
  return t.pa();
}

PageBytes Runtime::instance_read(InstanceId id, Vpn va) const {
  return machine().page_bytes(instance_access(id, va, Access::kRead));
}

void Runtime::instance_write(InstanceId id, Vpn va, std::size_t offset, PageBytes bytes) {
  if (offset > kPageSize || bytes.size() > kPageSize - offset) {
    throw Error(Errc::kInvalidArgument, "write crosses page boundary");
  }
  Ppn pa = instance_access(id, va, Access::kWrite);
  auto dst = machine().mutable_page_bytes(pa);
  std::copy(bytes.begin(), bytes.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
}

void Runtime::instance_destroy(InstanceId id) {
  FunctionInstance& inst = instance_mut(id);
  if (inst.state != InstanceState::kDone) throw Error(Errc::kNotDone, "instance " + id_str(id.value));
  for (Vpn va : inst.epc_pages) kernel_.remove_enclave_page(enclave_, va);
  std::erase_if(files_, [id](const auto& kv) { return kv.second.owner == id; });
  free_slots_.insert(inst.slot);
  instances_.erase(id);
}

// --- file system -------------------------------------------------------------

void Runtime::fs_register(InstanceId owner, const std::string& name,
                          std::span<const std::byte> trusted) {
  instance(owner);
  if (files_.contains(name)) throw Error(Errc::kInvalidArgument, "file exists: " + name);
  files_.emplace(name, FileRow{owner, content_digest(trusted), std::nullopt, false});
}

std::vector<std::byte> Runtime::fs_open(InstanceId caller, const std::string& name) {
  auto it = files_.find(name);
  if (it == files_.end()) throw Error(Errc::kNotFound, name);
  FileRow& row = it->second;
  if (row.owner != caller) throw Error(Errc::kNotOwner, name);
  if (row.dirty) return *row.content;

  // Outside data: fetched from whatever namespace this process entered
  // under, accepted only if it matches the digest kept in the enclave.
  const std::string env = kernel_.entry_environment(instance(caller).owner_pid);
  auto bytes = kernel_.host_fs_get(env, name);
  if (!bytes) throw Error(Errc::kNotFound, env + ":" + name);
  if (content_digest(*bytes) != row.trusted_digest) throw Error(Errc::kIntegrityMismatch, name);
  row.content = std::move(*bytes);
  return *row.content;
}

std::vector<std::byte> Runtime::fs_read(InstanceId caller, const std::string& name) const {
  auto it = files_.find(name);
  if (it == files_.end()) throw Error(Errc::kNotFound, name);
  if (it->second.owner != caller) throw Error(Errc::kNotOwner, name);
  if (!it->second.content) throw Error(Errc::kBadState, "file not open: " + name);
  return *it->second.content;
}

void Runtime::fs_write(InstanceId caller, const std::string& name, std::vector<std::byte> bytes) {
  auto it = files_.find(name);
  if (it == files_.end()) throw Error(Errc::kNotFound, name);
  if (it->second.owner != caller) throw Error(Errc::kNotOwner, name);
  it->second.content = std::move(bytes);
  it->second.dirty = true;
}

// --- data extent and copy-on-write --------------------------------------------

Vpn Runtime::alloc_pool_va() {
  std::uint64_t offset;
  if (!free_pool_.empty()) {
    offset = free_pool_.top();
    free_pool_.pop();
  } else {
    if (next_pool_ >= layout_.data_pool_pages) throw Error(Errc::kRegionExhausted, "data pool full");
    offset = next_pool_++;
  }
  return layout_.data_pool_base() + offset;
}

void Runtime::free_pool_va(Vpn va) { free_pool_.push(va.value - layout_.data_pool_base().value); }

void Runtime::release_data_ref(Vpn va) {
  auto it = data_refs_.find(va);
  if (--it->second == 0) {
    data_refs_.erase(it);
    kernel_.remove_enclave_page(enclave_, va);
    free_pool_va(va);
  }
}

const std::vector<Vpn>& Runtime::translation(Pid pid) const {
  auto it = translation_.find(pid);
  if (it == translation_.end()) throw Error(Errc::kUnknownPid, "no data view for pid " + id_str(pid.value));
  return it->second;
}

void Runtime::create_data_extent(Pid owner, std::uint64_t pages) {
  if (data_pages_ != 0) throw Error(Errc::kInvalidArgument, "data extent exists");
  if (pages == 0) throw Error(Errc::kInvalidArgument, "empty data extent");
  std::vector<Vpn> table;
  table.reserve(pages);
  data_refs_.reserve(pages * 2);
  for (std::uint64_t i = 0; i < pages; ++i) {
    Vpn va = alloc_pool_va();
    kernel_.add_enclave_page(owner, enclave_, va, {}, PageType::kRegular);
    table.push_back(va);
    data_refs_[va] = 1;
  }
  translation_[owner] = std::move(table);
  data_pages_ = pages;
}

PageBytes Runtime::data_read(Pid reader, std::uint64_t index) const {
  const auto& table = translation(reader);
  if (index >= table.size()) throw Error(Errc::kInvalidArgument, "page index out of extent");
  return machine().read(kernel_.container(reader).address_space, table[index],
                        CpuMode::enclave_mode(enclave_));
}

Ppn Runtime::data_page(Pid reader, std::uint64_t index) const {
  const auto& table = translation(reader);
  if (index >= table.size()) throw Error(Errc::kInvalidArgument, "page index out of extent");
  Translation t = machine().translate(kernel_.container(reader).address_space, table[index], Access::kRead,
                                      CpuMode::enclave_mode(enclave_));
  if (!t.ok()) throw Error(t.fault(), "data page " + id_str(index));
  return t.pa();
}

void Runtime::data_write(Pid writer, std::uint64_t index, std::size_t offset, PageBytes bytes) {
  if (live_forks_ != 0) throw Error(Errc::kBadState, "fork live; use cow_write");
  const auto& table = translation(writer);
  if (index >= table.size()) throw Error(Errc::kInvalidArgument, "page index out of extent");
  machine().write(kernel_.container(writer).address_space, table[index], offset, bytes,
                  CpuMode::enclave_mode(enclave_));
}

ForkPair Runtime::fork_cow(Pid parent_pid, double now_ms) {
  if (!has_live_thread(parent_pid)) throw Error(Errc::kThreadNotLive, "parent has no enclave thread");
  if (tcs_table_.free_count() == 0) throw Error(Errc::kNoFreeTcs, "fork");
  const std::vector<Vpn>& parent_table = translation(parent_pid);

  const Container& parent = kernel_.container(parent_pid);
  Container& child = kernel_.create_container(parent.fs_root, now_ms);
  kernel_.alias_enclave(child, kernel_.record_enclave_mappings(enclave_));

  ForkPair pair;
  pair.parent_pid = parent_pid;
  pair.child_pid = child.pid;
  pair.child_tcs = enter(child.pid);
  for (Vpn va : parent_table) ++data_refs_[va];
  translation_[child.pid] = parent_table;
  for (std::uint64_t i = 0; i < parent_table.size(); ++i) {
    pair.shared_pages.insert(pair.shared_pages.end(), i);
  }
  pair.live = true;
  ++live_forks_;
  return pair;
}

void Runtime::cow_write(ForkPair& pair, Pid writer, std::uint64_t index, std::size_t offset,
                        PageBytes bytes) {
  if (!pair.live) throw Error(Errc::kBadState, "fork pair finished");
  if (writer != pair.parent_pid && writer != pair.child_pid) {
    throw Error(Errc::kUnknownPid, id_str(writer.value));
  }
  auto& table = translation_.at(writer);
  if (index >= table.size()) throw Error(Errc::kInvalidArgument, "page index out of extent");

  if (pair.shared_pages.contains(index)) {
    // Privatize on the writer's side; the other side keeps the original.
    Vpn original = table[index];
    PageBytes src = machine().read(kernel_.container(writer).address_space, original,
                                   CpuMode::enclave_mode(enclave_));
    // An untouched page stays lazily zero in the copy too.
    bool zero = std::all_of(src.begin(), src.end(), [](std::byte b) { return b == std::byte{0}; });
    std::vector<std::byte> content;
    if (!zero) content.assign(src.begin(), src.end());
    Vpn copy_va = alloc_pool_va();
    EaddResult added;
    try {
      added = kernel_.add_enclave_page(writer, enclave_, copy_va, content, PageType::kRegular);
    } catch (...) {
      free_pool_va(copy_va);
      throw;
    }
    table[index] = copy_va;
    data_refs_[copy_va] = 1;
    release_data_ref(original);
    pair.private_copies[{writer, index}] = added.pa;
    pair.shared_pages.erase(index);
    ++pair.dirty_count;
  }
  machine().write(kernel_.container(writer).address_space, table[index], offset, bytes,
                  CpuMode::enclave_mode(enclave_));
}

PageBytes Runtime::cow_read(const ForkPair& pair, Pid reader, std::uint64_t index) const {
  if (!pair.live) throw Error(Errc::kBadState, "fork pair finished");
  if (reader != pair.parent_pid && reader != pair.child_pid) {
    throw Error(Errc::kUnknownPid, id_str(reader.value));
  }
  return data_read(reader, index);
}

Digest Runtime::data_digest(Pid reader) const {
  const auto& table = translation(reader);
  Measurement m;
  for (std::uint64_t i = 0; i < table.size(); ++i) {
    Ppn pa = data_page(reader, i);
    if (machine().is_lazy_zero(pa)) {
      m.extend(Vpn{i}, PageType::kRegular, {});
    } else {
      m.extend(Vpn{i}, PageType::kRegular, machine().page_bytes(pa));
    }
  }
  return m.digest();
}

Digest Runtime::snapshot(ForkPair& pair, Pid child) {
  if (!pair.live) throw Error(Errc::kBadState, "fork pair finished");
  if (child != pair.child_pid) throw Error(Errc::kUnknownPid, id_str(child.value));
  Digest digest = data_digest(child);

  leave(pair.child_tcs);
  std::vector<Vpn> table = std::move(translation_.at(child));
  translation_.erase(child);
  for (Vpn va : table) release_data_ref(va);
  kernel_.destroy_container(child);
  pair.live = false;
  --live_forks_;
  return digest;
}

}  // namespace ess
