#pragma once

#include <cstdint>
#include <string>

namespace mabt {

inline constexpr const char* kVersion = "1.0.0";

// FNV-1a 64-bit hash; used to fingerprint configurations in output headers so
// reruns with identical inputs produce byte-identical files (no timestamps).
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace mabt
