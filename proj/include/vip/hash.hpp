// 32-byte content fingerprints used to chain pipeline artifacts together.
// Four FNV-1a-64 passes with distinct seeds; not cryptographic, just a
// stable identity check.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace vip {

using Fingerprint = std::array<std::uint8_t, 32>;

inline Fingerprint fingerprint_bytes(std::span<const std::uint8_t> data) {
  constexpr std::uint64_t seeds[4] = {
      0xcbf29ce484222325ULL, 0x6c62272e07bb0142ULL, 0x9e3779b97f4a7c15ULL,
      0xd6e8feb86659fd93ULL};
  Fingerprint fp{};
  for (int pass = 0; pass < 4; ++pass) {
    std::uint64_t h = seeds[pass];
    for (std::uint8_t b : data) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
    for (int i = 0; i < 8; ++i)
      fp[static_cast<std::size_t>(pass * 8 + i)] =
          static_cast<std::uint8_t>(h >> (8 * i));
  }
  return fp;
}

inline std::string fingerprint_hex(const Fingerprint& fp) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : fp) {
    s.push_back(hex[b >> 4]);
    s.push_back(hex[b & 0xf]);
  }
  return s;
}

}  // namespace vip
