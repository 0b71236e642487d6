#pragma once

#include <cstddef>
#include <map>
#include <optional>

#include "ess/types.hpp"

namespace ess {

// A per-process page table. Hardware only reads it; the untrusted kernel
// (honest or adversarial) is the only writer.
class AddressSpace {
 public:
  std::optional<Ppn> lookup(Vpn va) const {
    auto it = table_.find(va);
    if (it == table_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(Vpn va) const { return table_.contains(va); }
  void map(Vpn va, Ppn pa) { table_[va] = pa; }
  bool unmap(Vpn va) { return table_.erase(va) != 0; }

  std::size_t size() const { return table_.size(); }
  const std::map<Vpn, Ppn>& entries() const { return table_; }

 private:
  std::map<Vpn, Ppn> table_;
};

}  // namespace ess
