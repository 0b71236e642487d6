#include "ess/measurement.hpp"

#include <algorithm>
#include <array>

namespace ess {
namespace {

constexpr std::uint64_t pow_mod64(std::uint64_t base, std::uint64_t exp) {
  std::uint64_t result = 1;
  while (exp != 0) {
    if (exp & 1U) result *= base;
    base *= base;
    exp >>= 1U;
  }
  return result;
}

constexpr std::uint64_t kZeroPageMultiplier = pow_mod64(Measurement::kPrime, kPageSize);

}  // namespace

std::uint64_t Measurement::fold(std::uint64_t state, std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state ^= static_cast<std::uint64_t>(b);
    state *= kPrime;
  }
  return state;
}

// x ^ 0 == x, so each zero byte is a single multiplication by the prime.
std::uint64_t Measurement::fold_zeros(std::uint64_t state, std::uint64_t count) {
  if (count == kPageSize) return state * kZeroPageMultiplier;
  return state * pow_mod64(kPrime, count);
}

void Measurement::extend(Vpn va, PageType type, std::span<const std::byte> content) {
  std::array<std::byte, 9> header{};
  for (int i = 0; i < 8; ++i) {
    header[i] = static_cast<std::byte>((va.value >> (8 * i)) & 0xffU);
  }
  header[8] = static_cast<std::byte>(type);
  state_ = fold(state_, header);
  if (content.empty()) {
    state_ = fold_zeros(state_, kPageSize);
  } else {
    state_ = fold(state_, content);
    if (content.size() < kPageSize) state_ = fold_zeros(state_, kPageSize - content.size());
  }
  ++pages_;
}

}  // namespace ess

namespace ess {

Digest content_digest(std::span<const std::byte> bytes) {
  const std::uint64_t length = bytes.size();
  Measurement m;
  std::uint64_t index = 0;
  while (!bytes.empty()) {
    auto chunk = bytes.subspan(0, std::min(bytes.size(), kPageSize));
    m.extend(Vpn{index++}, PageType::kRegular, chunk);
    bytes = bytes.subspan(chunk.size());
  }
  // Zero padding of the last chunk is ambiguous without the length.
  std::array<std::byte, 8> len{};
  for (int i = 0; i < 8; ++i) len[i] = static_cast<std::byte>((length >> (8 * i)) & 0xffU);
  return Digest{Measurement::fold(m.digest().value, len)};
}

}  // namespace ess
