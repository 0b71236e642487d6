#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ess {

inline constexpr std::size_t kPageSize = 4096;

/// Integer identifier tagged by its domain so that page numbers, enclave ids
/// and pids cannot be mixed up.
template <class Tag>
struct Id {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(Id, Id) = default;
};

struct VpnTag;
struct PpnTag;
struct EnclaveTag;
struct PidTag;
struct InstanceTag;

using Vpn = Id<VpnTag>;            // virtual page number
using Ppn = Id<PpnTag>;            // physical page number
using EnclaveId = Id<EnclaveTag>;
using Pid = Id<PidTag>;
using InstanceId = Id<InstanceTag>;

constexpr Vpn operator+(Vpn v, std::uint64_t n) { return Vpn{v.value + n}; }

enum class Errc {
  kDuplicateEnclaveId,
  kUnknownEnclave,
  kVaAlreadyMapped,
  kVaOutOfRange,
  kOutOfEpc,
  kAlreadyInitialized,
  kEnclaveNotInitialized,
  kNotMapped,
  kEpcmMismatch,
  kAbortPage,
  kNotEpcPage,
  kTcsBusy,
  kNotTcsPage,
  kNoSavedContext,
  kThreadNotLive,
  kVaConflict,
  kNoFreeTcs,
  kNotHeld,
  kUnknownPid,
  kRegionExhausted,
  kIsolationFault,
  kNonEpcMapping,
  kNotDone,
  kBadState,
  kNotFound,
  kNotOwner,
  kIntegrityMismatch,
  kNegativeDuration,
  kNegativeOccupancy,
  kInvalidArgument,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ess

template <class Tag>
struct std::hash<ess::Id<Tag>> {
  std::size_t operator()(ess::Id<Tag> id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
