#pragma once

#include <cstdint>
#include <span>

#include "ess/types.hpp"

namespace ess {

enum class PageType : std::uint8_t { kRegular = 0, kTcs = 1 };

struct Digest {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(Digest, Digest) = default;
};

// Order-sensitive 64-bit FNV-1a accumulation over (va, page type, content)
// records. Not collision resistant; only deterministic and sensitive.
class Measurement {
 public:
  static constexpr std::uint64_t kOffsetBasis = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  // Empty content stands for an all-zero page.
  void extend(Vpn va, PageType type, std::span<const std::byte> content);

  Digest digest() const { return Digest{state_}; }
  std::uint64_t pages() const { return pages_; }

  static std::uint64_t fold(std::uint64_t state, std::span<const std::byte> bytes);
  // Equivalent to folding `count` zero bytes.
  static std::uint64_t fold_zeros(std::uint64_t state, std::uint64_t count);

 private:
  std::uint64_t state_ = kOffsetBasis;
  std::uint64_t pages_ = 0;
};

}  // namespace ess

namespace ess {

// Digest of an arbitrary byte string, folded page by page.
Digest content_digest(std::span<const std::byte> bytes);

}  // namespace ess
