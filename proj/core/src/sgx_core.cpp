#include "ess/sgx_core.hpp"

#include <algorithm>
#include <array>
#include <string>

namespace ess {
namespace {

const std::array<std::byte, kPageSize>& zero_page() {
  static const std::array<std::byte, kPageSize> zeros{};
  return zeros;
}

std::string hex(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  do {
    out.insert(out.begin(), kDigits[v & 0xfU]);
    v >>= 4U;
  } while (v != 0);
  return "0x" + out;
}

}  // namespace

const TcsPage* Enclave::find_tcs(Vpn va) const {
  auto it = std::find_if(tcs_table.begin(), tcs_table.end(),
                         [va](const TcsPage& t) { return t.tcs_va == va; });
  return it == tcs_table.end() ? nullptr : &*it;
}

TcsPage* Enclave::find_tcs(Vpn va) {
  return const_cast<TcsPage*>(std::as_const(*this).find_tcs(va));
}

Machine::Machine(MachineConfig config) : config_(config) {}

Ppn Machine::alloc_regular_page() {
  Ppn pa{next_regular_++};
  pages_.emplace(pa, PhysicalPage{false, {}});
  return pa;
}

void Machine::free_regular_page(Ppn pa) {
  if (is_epc(pa)) throw Error(Errc::kInvalidArgument, "EPC page freed as regular " + hex(pa.value));
  pages_.erase(pa);
}

PageBytes Machine::page_bytes(Ppn pa) const {
  auto it = pages_.find(pa);
  if (it == pages_.end()) throw Error(Errc::kNotMapped, "no physical page " + hex(pa.value));
  if (it->second.content.empty()) return zero_page();
  return it->second.content;
}

bool Machine::is_lazy_zero(Ppn pa) const {
  auto it = pages_.find(pa);
  if (it == pages_.end()) throw Error(Errc::kNotMapped, "no physical page " + hex(pa.value));
  return it->second.content.empty();
}

std::span<std::byte> Machine::mutable_page_bytes(Ppn pa) {
  auto it = pages_.find(pa);
  if (it == pages_.end()) throw Error(Errc::kNotMapped, "no physical page " + hex(pa.value));
  if (it->second.content.empty()) it->second.content.assign(kPageSize, std::byte{0});
  return it->second.content;
}

const EpcmEntry* Machine::epcm(Ppn pa) const {
  auto it = epcm_.find(pa);
  return it == epcm_.end() ? nullptr : &it->second;
}

Ppn Machine::alloc_epc_page() {
  if (epc_used_ >= config_.epc_capacity_pages) {
    throw Error(Errc::kOutOfEpc, std::to_string(epc_used_) + " pages in use");
  }
  std::uint64_t raw;
  if (!free_epc_.empty()) {
    raw = free_epc_.top();
    free_epc_.pop();
  } else {
    raw = next_epc_++;
  }
  ++epc_used_;
  Ppn pa{raw};
  pages_.emplace(pa, PhysicalPage{true, {}});
  return pa;
}

Enclave& Machine::ecreate(const EnclaveConfig& config) {
  if (enclaves_.contains(config.id)) {
    throw Error(Errc::kDuplicateEnclaveId, std::to_string(config.id.value));
  }
  Enclave e;
  e.id = config.id;
  e.base = config.base;
  e.size_pages = config.size_pages;
  return enclaves_.emplace(config.id, std::move(e)).first->second;
}

const Enclave& Machine::enclave(EnclaveId id) const {
  auto it = enclaves_.find(id);
  if (it == enclaves_.end()) throw Error(Errc::kUnknownEnclave, std::to_string(id.value));
  return it->second;
}

Enclave& Machine::enclave_mut(EnclaveId id) {
  return const_cast<Enclave&>(std::as_const(*this).enclave(id));
}

EaddResult Machine::eadd(EnclaveId id, Vpn va, PageBytes content, PageType type,
                         std::uint64_t oentry) {
  Enclave& e = enclave_mut(id);
  if (!e.in_range(va)) throw Error(Errc::kVaOutOfRange, hex(va.value));
  if (e.pages.contains(va)) throw Error(Errc::kVaAlreadyMapped, hex(va.value));
  if (content.size() > kPageSize) throw Error(Errc::kInvalidArgument, "content exceeds page");

  Ppn pa = alloc_epc_page();
  if (!content.empty()) {
    auto dst = mutable_page_bytes(pa);
    std::copy(content.begin(), content.end(), dst.begin());
  }
  EpcmEntry entry{pa, va, id, type, true};
  epcm_[pa] = entry;
  ++valid_epcm_;
  e.pages.emplace(va, pa);
  if (type == PageType::kTcs) {
    e.tcs_table.push_back(TcsPage{va, oentry, TcsState::kAvailable, std::nullopt, 0});
  }
  if (!e.initialized) e.measurement.extend(va, type, page_bytes(pa));
  return EaddResult{pa, entry};
}

Digest Machine::einit(EnclaveId id) {
  Enclave& e = enclave_mut(id);
  if (e.initialized) throw Error(Errc::kAlreadyInitialized, std::to_string(id.value));
  e.initialized = true;
  return e.measurement.digest();
}

Ppn Machine::eremove(EnclaveId id, Vpn va) {
  Enclave& e = enclave_mut(id);
  auto it = e.pages.find(va);
  if (it == e.pages.end()) throw Error(Errc::kNotMapped, hex(va.value));
  Ppn pa = it->second;
  if (const TcsPage* tcs = e.find_tcs(va); tcs != nullptr) {
    if (tcs->state == TcsState::kBusy) throw Error(Errc::kTcsBusy, hex(va.value));
    std::erase_if(e.tcs_table, [va](const TcsPage& t) { return t.tcs_va == va; });
  }
  e.pages.erase(it);
  epcm_[pa].valid = false;
  --valid_epcm_;
  pages_.erase(pa);
  free_epc_.push(pa.value);
  --epc_used_;
  return pa;
}

Translation Machine::translate(const AddressSpace& space, Vpn va, Access access,
                               CpuMode mode) const {
  auto pa = space.lookup(va);
  if (!pa || !pages_.contains(*pa)) return Translation::fault(Errc::kNotMapped);
  if (!is_epc(*pa)) return Translation::ok(*pa, false);
  if (!mode.in_enclave) return Translation::fault(Errc::kAbortPage);

  const EpcmEntry* entry = epcm(*pa);
  if (entry == nullptr || !entry->valid) return Translation::fault(Errc::kEpcmMismatch);
  if (entry->enclave_id != mode.enclave || entry->va != va) {
    return Translation::fault(Errc::kEpcmMismatch);
  }
  // TCS pages are only reachable through EENTER/ERESUME.
  if (entry->page_type == PageType::kTcs) return Translation::fault(Errc::kEpcmMismatch);
  (void)access;
  return Translation::ok(*pa, true);
}

PageBytes Machine::read(const AddressSpace& space, Vpn va, CpuMode mode) const {
  Translation t = translate(space, va, Access::kRead, mode);
  if (!t.ok()) throw Error(t.fault(), "read " + hex(va.value));
  return page_bytes(t.pa());
}

void Machine::write(const AddressSpace& space, Vpn va, std::size_t offset, PageBytes bytes,
                    CpuMode mode) {
  if (offset > kPageSize || bytes.size() > kPageSize - offset) {
    throw Error(Errc::kInvalidArgument, "write crosses page boundary");
  }
  Translation t = translate(space, va, Access::kWrite, mode);
  if (!t.ok()) throw Error(t.fault(), "write " + hex(va.value));
  auto dst = mutable_page_bytes(t.pa());
  std::copy(bytes.begin(), bytes.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
}

TcsPage& Machine::resolve_tcs(const AddressSpace& space, Vpn tcs_va, EnclaveId& owner) {
  auto pa = space.lookup(tcs_va);
  if (!pa || !pages_.contains(*pa)) throw Error(Errc::kNotMapped, hex(tcs_va.value));
  if (!is_epc(*pa)) throw Error(Errc::kNotTcsPage, "non-EPC page at " + hex(tcs_va.value));
  const EpcmEntry* entry = epcm(*pa);
  if (entry == nullptr || !entry->valid || entry->va != tcs_va) {
    throw Error(Errc::kEpcmMismatch, hex(tcs_va.value));
  }
  if (entry->page_type != PageType::kTcs) throw Error(Errc::kNotTcsPage, hex(tcs_va.value));
  Enclave& e = enclave_mut(entry->enclave_id);
  if (!e.initialized) throw Error(Errc::kEnclaveNotInitialized, std::to_string(e.id.value));
  TcsPage* tcs = e.find_tcs(tcs_va);
  if (tcs == nullptr) throw Error(Errc::kNotTcsPage, hex(tcs_va.value));
  owner = e.id;
  return *tcs;
}

EnclaveThread Machine::eenter(const AddressSpace& space, Vpn tcs_va) {
  EnclaveId owner;
  TcsPage& tcs = resolve_tcs(space, tcs_va, owner);
  if (tcs.state == TcsState::kBusy) throw Error(Errc::kTcsBusy, hex(tcs_va.value));
  tcs.state = TcsState::kBusy;
  tcs.binding = next_generation_++;
  return EnclaveThread{owner, tcs_va, tcs.binding, tcs.oentry, RegisterContext{}};
}

TcsPage& Machine::live_tcs(const EnclaveThread& thread) {
  auto it = enclaves_.find(thread.enclave);
  TcsPage* tcs = it == enclaves_.end() ? nullptr : it->second.find_tcs(thread.tcs_va);
  if (tcs == nullptr || tcs->state != TcsState::kBusy || tcs->binding != thread.generation ||
      thread.generation == 0 || tcs->saved_context.has_value()) {
    throw Error(Errc::kThreadNotLive, hex(thread.tcs_va.value));
  }
  return *tcs;
}

bool Machine::is_live(const EnclaveThread& thread) const {
  auto it = enclaves_.find(thread.enclave);
  if (it == enclaves_.end()) return false;
  const TcsPage* tcs = it->second.find_tcs(thread.tcs_va);
  return tcs != nullptr && tcs->state == TcsState::kBusy && thread.generation != 0 &&
         tcs->binding == thread.generation && !tcs->saved_context.has_value();
}

void Machine::eexit(EnclaveThread& thread) {
  TcsPage& tcs = live_tcs(thread);
  tcs.state = TcsState::kAvailable;
  tcs.binding = 0;
  tcs.saved_context.reset();
  thread.generation = 0;
}

void Machine::aex(EnclaveThread& thread) {
  TcsPage& tcs = live_tcs(thread);
  tcs.saved_context = thread.context;
  thread.generation = 0;
}

EnclaveThread Machine::eresume(const AddressSpace& space, Vpn tcs_va) {
  EnclaveId owner;
  TcsPage& tcs = resolve_tcs(space, tcs_va, owner);
  if (!tcs.saved_context) throw Error(Errc::kNoSavedContext, hex(tcs_va.value));
  EnclaveThread thread{owner, tcs_va, next_generation_++, tcs.oentry, *tcs.saved_context};
  tcs.binding = thread.generation;
  tcs.saved_context.reset();
  return thread;
}

const TcsPage& Machine::tcs(EnclaveId id, Vpn tcs_va) const {
  const TcsPage* t = enclave(id).find_tcs(tcs_va);
  if (t == nullptr) throw Error(Errc::kNotTcsPage, hex(tcs_va.value));
  return *t;
}

}  // namespace ess
