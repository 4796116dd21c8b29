#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace treechain {

inline constexpr std::string_view kVersion = "0.1.0";

// FNV-1a over the canonical config string; embedded in every artifact so a
// result can be traced back to the exact run configuration.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(std::string_view canonical_config) {
  char buf[17];
  std::uint64_t h = fnv1a(canonical_config);
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = hex[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

}  // namespace treechain
