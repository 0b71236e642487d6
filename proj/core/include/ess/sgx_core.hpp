#pragma once

// Functional model of the SGX memory and thread architecture: EPC pages,
// the EPCM, enclave lifecycle instructions and TCS-based enclave threads.
//
// Two properties of the real hardware matter most here and are kept exact:
//  * EPCM validation compares the translated page against the (va, enclave)
//    it was created for, and nothing else. The walking process is not part
//    of the check, so a second page table holding the same (va -> pa) pair
//    reaches the same EPC page.
//  * Any TCS can be entered from any process.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <unordered_map>
#include <vector>

#include "ess/address_space.hpp"
#include "ess/measurement.hpp"
#include "ess/types.hpp"

namespace ess {

using PageBytes = std::span<const std::byte>;

enum class Access { kRead, kWrite, kExecute };

struct CpuMode {
  bool in_enclave = false;
  EnclaveId enclave{};

  static CpuMode enclave_mode(EnclaveId id) { return CpuMode{true, id}; }
  static CpuMode non_enclave() { return CpuMode{}; }
};

struct EpcmEntry {
  Ppn pa{};
  Vpn va{};
  EnclaveId enclave_id{};
  PageType page_type = PageType::kRegular;
  bool valid = false;
};

// Stand-in for the State Save Area contents.
using RegisterContext = std::array<std::uint64_t, 4>;

enum class TcsState { kAvailable, kBusy };

struct TcsPage {
  Vpn tcs_va{};
  std::uint64_t oentry = 0;
  TcsState state = TcsState::kAvailable;
  std::optional<RegisterContext> saved_context;
  std::uint64_t binding = 0;  // generation of the bound thread, 0 when free
};

struct EnclaveConfig {
  EnclaveId id{};
  Vpn base{};
  std::uint64_t size_pages = 0;
};

struct Enclave {
  EnclaveId id{};
  Vpn base{};
  std::uint64_t size_pages = 0;
  std::map<Vpn, Ppn> pages;
  std::vector<TcsPage> tcs_table;
  Measurement measurement;
  bool initialized = false;

  bool in_range(Vpn va) const {
    return va.value >= base.value && va.value - base.value < size_pages;
  }
  const TcsPage* find_tcs(Vpn va) const;
  TcsPage* find_tcs(Vpn va);
};

struct EaddResult {
  Ppn pa{};
  EpcmEntry entry;
};

class Translation {
 public:
  static Translation ok(Ppn pa, bool epc) { return Translation(pa, epc, std::nullopt); }
  static Translation fault(Errc code) { return Translation(Ppn{}, false, code); }

  bool ok() const { return !fault_.has_value(); }
  Ppn pa() const { return pa_; }
  bool epc() const { return epc_; }
  Errc fault() const { return *fault_; }

 private:
  Translation(Ppn pa, bool epc, std::optional<Errc> fault) : pa_(pa), epc_(epc), fault_(fault) {}

  Ppn pa_;
  bool epc_;
  std::optional<Errc> fault_;
};

// Handle to an enclave thread. Valid while its generation matches the binding
// recorded in the TCS.
struct EnclaveThread {
  EnclaveId enclave{};
  Vpn tcs_va{};
  std::uint64_t generation = 0;
  std::uint64_t entry_point = 0;
  RegisterContext context{};
};

struct MachineConfig {
  std::uint64_t epc_capacity_pages = 1ULL << 24;
};

class Machine {
 public:
  // EPC page numbers start here; regular DRAM page numbers start at 1.
  static constexpr std::uint64_t kEpcBase = 1ULL << 40;

  explicit Machine(MachineConfig config = {});

  // --- physical memory -----------------------------------------------------
  Ppn alloc_regular_page();
  void free_regular_page(Ppn pa);
  bool is_epc(Ppn pa) const { return pa.value >= kEpcBase; }
  bool exists(Ppn pa) const { return pages_.contains(pa); }
  // Always kPageSize bytes.
  PageBytes page_bytes(Ppn pa) const;
  std::span<std::byte> mutable_page_bytes(Ppn pa);
  // True while the page has never been written (reads as zeros).
  bool is_lazy_zero(Ppn pa) const;

  std::uint64_t epc_capacity_pages() const { return config_.epc_capacity_pages; }
  std::uint64_t epc_used_pages() const { return epc_used_; }
  std::uint64_t valid_epcm_entries() const { return valid_epcm_; }
  const EpcmEntry* epcm(Ppn pa) const;

  // --- enclave lifecycle ---------------------------------------------------
  Enclave& ecreate(const EnclaveConfig& config);
  const Enclave& enclave(EnclaveId id) const;
  bool has_enclave(EnclaveId id) const { return enclaves_.contains(id); }

  // Before einit the page is measured; afterwards it models SGX2 dynamic
  // allocation and leaves the measurement untouched.
  EaddResult eadd(EnclaveId id, Vpn va, PageBytes content, PageType type,
                  std::uint64_t oentry = 0);
  Digest einit(EnclaveId id);
  // Frees the page and invalidates its EPCM entry in one step.
  Ppn eremove(EnclaveId id, Vpn va);

  // --- access --------------------------------------------------------------
  Translation translate(const AddressSpace& space, Vpn va, Access access, CpuMode mode) const;
  // Throwing variants of translate followed by the data access.
  PageBytes read(const AddressSpace& space, Vpn va, CpuMode mode) const;
  void write(const AddressSpace& space, Vpn va, std::size_t offset, PageBytes bytes,
             CpuMode mode);

  // --- threads -------------------------------------------------------------
  EnclaveThread eenter(const AddressSpace& space, Vpn tcs_va);
  void eexit(EnclaveThread& thread);
  void aex(EnclaveThread& thread);
  EnclaveThread eresume(const AddressSpace& space, Vpn tcs_va);
  bool is_live(const EnclaveThread& thread) const;
  const TcsPage& tcs(EnclaveId id, Vpn tcs_va) const;

 private:
  struct PhysicalPage {
    bool is_epc = false;
    std::vector<std::byte> content;  // empty until first write: zero page
  };

  Enclave& enclave_mut(EnclaveId id);
  Ppn alloc_epc_page();
  // Resolves tcs_va to the TCS it designates, with the same checks EENTER does.
  TcsPage& resolve_tcs(const AddressSpace& space, Vpn tcs_va, EnclaveId& owner);
  TcsPage& live_tcs(const EnclaveThread& thread);

  MachineConfig config_;
  std::unordered_map<Ppn, PhysicalPage> pages_;
  std::unordered_map<Ppn, EpcmEntry> epcm_;
  std::map<EnclaveId, Enclave> enclaves_;
  std::priority_queue<std::uint64_t, std::vector<std::uint64_t>, std::greater<>> free_epc_;
  std::uint64_t next_epc_ = kEpcBase;
  std::uint64_t next_regular_ = 1;
  std::uint64_t epc_used_ = 0;
  std::uint64_t valid_epcm_ = 0;
  std::uint64_t next_generation_ = 1;
};

}  // namespace ess
