#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "usegnet/graph.hpp"

namespace usegnet {

// Checkpoint layout, all integers and doubles little-endian:
//   bytes 0..3   magic "USGN"
//   bytes 4..7   format version (currently 1)
//   bytes 8..15  fingerprint of the architecture description
//   then every learnable parameter as f64 in graph order
//     (per conv: weights then bias; per batch norm: gamma then beta)
//   then per batch norm: running mean then running variance.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline constexpr bool kBigEndianHost = std::endian::native == std::endian::big;

inline void put_u32(std::ostream& os, std::uint32_t v) {
  if (kBigEndianHost) v = byteswap32(v);
  os.write(reinterpret_cast<const char*>(&v), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  if (kBigEndianHost) v = byteswap64(v);
  os.write(reinterpret_cast<const char*>(&v), 8);
}

inline void put_f64(std::ostream& os, double v) {
  if (kBigEndianHost) v = byteswap_double(v);
  os.write(reinterpret_cast<const char*>(&v), 8);
}

inline void put_f64s(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) put_f64(os, x);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  require(is.gcount() == 4, "checkpoint " + path + ": truncated file");
  return kBigEndianHost ? byteswap32(v) : v;
}

inline std::uint64_t get_u64(std::istream& is, const std::string& path) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  require(is.gcount() == 8, "checkpoint " + path + ": truncated file");
  return kBigEndianHost ? byteswap64(v) : v;
}

inline void get_f64s(std::istream& is, std::vector<double>& v, const std::string& path) {
  for (double& x : v) {
    is.read(reinterpret_cast<char*>(&x), 8);
    require(is.gcount() == 8, "checkpoint " + path + ": truncated file");
    if (kBigEndianHost) x = byteswap_double(x);
  }
}

}  // namespace detail

inline void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "checkpoint " + path + ": cannot open for writing");
  os.write("USGN", 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u64(os, net.fingerprint());
  for (const ConvParams& c : net.convs) {
    detail::put_f64s(os, c.w);
    detail::put_f64s(os, c.b);
  }
  for (const BatchNormParams& b : net.bns) {
    detail::put_f64s(os, b.gamma);
    detail::put_f64s(os, b.beta);
  }
  for (const BatchNormParams& b : net.bns) {
    detail::put_f64s(os, b.run_mean);
    detail::put_f64s(os, b.run_var);
  }
  os.flush();
  require(os.good(), "checkpoint " + path + ": write failed");
}

// Loads parameters into an already-built network of the same architecture.
// The stored fingerprint must match; running statistics become usable for
// inference as soon as the file is read.
inline void load_checkpoint(Network& net, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "checkpoint " + path + ": cannot open");
  char magic[4] = {};
  is.read(magic, 4);
  require(is.gcount() == 4 && std::string(magic, 4) == "USGN",
          "checkpoint " + path + ": bad magic, not a checkpoint file");
  const std::uint32_t version = detail::get_u32(is, path);
  require(version == kCheckpointVersion,
          "checkpoint " + path + ": unsupported version " + std::to_string(version));
  const std::uint64_t fp = detail::get_u64(is, path);
  require(fp == net.fingerprint(),
          "checkpoint " + path + ": architecture fingerprint mismatch (file " +
              std::to_string(fp) + ", network " + std::to_string(net.fingerprint()) + ")");
  for (ConvParams& c : net.convs) {
    detail::get_f64s(is, c.w, path);
    detail::get_f64s(is, c.b, path);
  }
  for (BatchNormParams& b : net.bns) {
    detail::get_f64s(is, b.gamma, path);
    detail::get_f64s(is, b.beta, path);
  }
  for (BatchNormParams& b : net.bns) {
    detail::get_f64s(is, b.run_mean, path);
    detail::get_f64s(is, b.run_var, path);
    b.stats_ready = true;
  }
  is.peek();
  require(is.eof(), "checkpoint " + path + ": trailing bytes after parameters");
}

}  // namespace usegnet
