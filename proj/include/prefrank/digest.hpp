#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace prefrank {

// 64-bit FNV-1a. Used for config and checkpoint digests and for deriving
// per-group random streams; not a cryptographic hash.
inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                             std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::uint64_t fnv1a64(std::string_view text) {
  return fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string digest_hex(std::uint64_t digest);

}  // namespace prefrank
