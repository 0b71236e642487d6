#include "ess/types.hpp"

namespace ess {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kDuplicateEnclaveId: return "DuplicateEnclaveId";
    case Errc::kUnknownEnclave: return "UnknownEnclave";
    case Errc::kVaAlreadyMapped: return "VaAlreadyMapped";
    case Errc::kVaOutOfRange: return "VaOutOfRange";
    case Errc::kOutOfEpc: return "OutOfEpc";
    case Errc::kAlreadyInitialized: return "AlreadyInitialized";
    case Errc::kEnclaveNotInitialized: return "EnclaveNotInitialized";
    case Errc::kNotMapped: return "NotMapped";
    case Errc::kEpcmMismatch: return "EpcmMismatch";
    case Errc::kAbortPage: return "AbortPage";
    case Errc::kNotEpcPage: return "NotEpcPage";
    case Errc::kTcsBusy: return "TcsBusy";
    case Errc::kNotTcsPage: return "NotTcsPage";
    case Errc::kNoSavedContext: return "NoSavedContext";
    case Errc::kThreadNotLive: return "ThreadNotLive";
    case Errc::kVaConflict: return "VaConflict";
    case Errc::kNoFreeTcs: return "NoFreeTcs";
    case Errc::kNotHeld: return "NotHeld";
    case Errc::kUnknownPid: return "UnknownPid";
    case Errc::kRegionExhausted: return "RegionExhausted";
    case Errc::kIsolationFault: return "IsolationFault";
    case Errc::kNonEpcMapping: return "NonEpcMapping";
    case Errc::kNotDone: return "NotDone";
    case Errc::kBadState: return "BadState";
    case Errc::kNotFound: return "NotFound";
    case Errc::kNotOwner: return "NotOwner";
    case Errc::kIntegrityMismatch: return "IntegrityMismatch";
    case Errc::kNegativeDuration: return "NegativeDuration";
    case Errc::kNegativeOccupancy: return "NegativeOccupancy";
    case Errc::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) +
                         (detail.empty() ? "" : ": " + detail)),
      code_(code) {}

}  // namespace ess
