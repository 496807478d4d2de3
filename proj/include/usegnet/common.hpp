#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

namespace usegnet {

// Bad or inconsistent data (shape mismatches, malformed files, labels out of
// range). Maps to process exit code 2 in the CLI.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (NaN/Inf encountered, diverged training). Exit code 3.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw data_error(msg);
}

// FNV-1a, used for checkpoint topology fingerprints.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint16_t byteswap16(std::uint16_t v) {
  return static_cast<std::uint16_t>((v >> 8) | (v << 8));
}
inline std::uint32_t byteswap32(std::uint32_t v) { return __builtin_bswap32(v); }
inline std::uint64_t byteswap64(std::uint64_t v) { return __builtin_bswap64(v); }

inline float byteswap_float(float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  u = byteswap32(u);
  std::memcpy(&v, &u, 4);
  return v;
}

inline double byteswap_double(double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  u = byteswap64(u);
  std::memcpy(&v, &u, 8);
  return v;
}

// Deterministic RNG used everywhere a seed appears in a contract.
using Rng = std::mt19937_64;

// Derives an independent stream from (seed, salt) without correlating streams
// for nearby salts.
inline Rng seeded_rng(std::uint64_t seed, std::uint64_t salt = 0) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return Rng(x);
}

}  // namespace usegnet
