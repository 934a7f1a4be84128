#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ragroute {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// FNV-1a 64 continuing from `state`.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffset) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= kFnvPrime;
  }
  return state;
}

/// FNV-1a 64 over the 8 little-endian salt bytes followed by `bytes`.
inline std::uint64_t salted_fnv1a64(std::uint64_t salt, std::string_view bytes) {
  std::uint64_t state = kFnvOffset;
  for (int i = 0; i < 8; ++i) {
    state ^= (salt >> (8 * i)) & 0xffU;
    state *= kFnvPrime;
  }
  return fnv1a64(bytes, state);
}

std::string hex64(std::uint64_t value);

/// FNV-1a 64 digest of a file's bytes, as 16 hex chars.
std::string file_digest(const std::string& path);

}  // namespace ragroute
