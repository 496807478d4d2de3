#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "usegnet/common.hpp"

namespace usegnet {

// Canonical (MODEL) label codes used everywhere inside the pipeline.
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kGm = 1;
inline constexpr std::uint8_t kWm = 2;
inline constexpr std::uint8_t kCsf = 3;

// IBSR ground-truth files use 0 bg, 1 CSF, 2 GM, 3 WM instead.
enum class LabelConvention { ibsr, model };

inline std::string convention_name(LabelConvention c) {
  return c == LabelConvention::ibsr ? "ibsr" : "model";
}

inline LabelConvention parse_convention(const std::string& s) {
  if (s == "ibsr") return LabelConvention::ibsr;
  if (s == "model") return LabelConvention::model;
  throw data_error("unknown label convention '" + s + "' (expected ibsr or model)");
}

// 3-D intensity volume, X fastest (sagittal), then Y (coronal), then Z
// (axial): voxel (x,y,z) lives at x + nx*(y + ny*z). Axial slices are the
// contiguous nx*ny planes.
struct Volume {
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> v;
  std::string source;  // file path or phantom seed tag

  Volume() = default;
  Volume(int x, int y, int z)
      : nx(x), ny(y), nz(z), v(static_cast<std::size_t>(x) * y * z, 0.0) {}

  std::size_t size() const { return v.size(); }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(z) * ny * nx + static_cast<std::size_t>(y) * nx + x;
  }
  double& at(int x, int y, int z) { return v[index(x, y, z)]; }
  double at(int x, int y, int z) const { return v[index(x, y, z)]; }
  const double* slice(int z) const {
    return v.data() + static_cast<std::size_t>(z) * ny * nx;
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

struct LabelVolume {
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint8_t> v;
  LabelConvention convention = LabelConvention::model;

  LabelVolume() = default;
  LabelVolume(int x, int y, int z,
              LabelConvention conv = LabelConvention::model)
      : nx(x), ny(y), nz(z), v(static_cast<std::size_t>(x) * y * z, 0),
        convention(conv) {}

  std::size_t size() const { return v.size(); }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(z) * ny * nx + static_cast<std::size_t>(y) * nx + x;
  }
  std::uint8_t& at(int x, int y, int z) { return v[index(x, y, z)]; }
  std::uint8_t at(int x, int y, int z) const { return v[index(x, y, z)]; }
  const std::uint8_t* slice(int z) const {
    return v.data() + static_cast<std::size_t>(z) * ny * nx;
  }
};

inline void check_labels(const LabelVolume& lv) {
  for (std::uint8_t l : lv.v)
    require(l <= 3, "label volume contains value " + std::to_string(l) +
                        " outside {0,1,2,3}");
}

// Bijective relabeling between the two conventions. A volume already in the
// requested convention passes through unchanged.
inline LabelVolume remap_labels(const LabelVolume& lv, LabelConvention to) {
  if (lv.convention == to) return lv;
  // ibsr->model: 0 bg->0, 1 CSF->3, 2 GM->1, 3 WM->2; model->ibsr inverts it.
  static constexpr std::array<std::uint8_t, 4> ibsr_to_model{0, 3, 1, 2};
  static constexpr std::array<std::uint8_t, 4> model_to_ibsr{0, 2, 3, 1};
  const auto& map =
      to == LabelConvention::model ? ibsr_to_model : model_to_ibsr;
  LabelVolume out(lv.nx, lv.ny, lv.nz, to);
  for (std::size_t i = 0; i < lv.v.size(); ++i) {
    require(lv.v[i] <= 3, "remap_labels: label " + std::to_string(lv.v[i]) +
                              " outside {0,1,2,3}");
    out.v[i] = map[lv.v[i]];
  }
  return out;
}

inline std::array<std::size_t, 4> class_voxel_counts(const LabelVolume& lv) {
  std::array<std::size_t, 4> counts{};
  for (std::uint8_t l : lv.v) {
    require(l <= 3, "class_voxel_counts: label out of range");
    ++counts[l];
  }
  return counts;
}

enum class RawType { u8, i16, f32, f64 };

inline std::size_t raw_element_size(RawType t) {
  switch (t) {
    case RawType::u8: return 1;
    case RawType::i16: return 2;
    case RawType::f32: return 4;
    case RawType::f64: return 8;
  }
  return 0;
}

inline RawType parse_raw_type(const std::string& s) {
  if (s == "u8") return RawType::u8;
  if (s == "i16") return RawType::i16;
  if (s == "f32") return RawType::f32;
  if (s == "f64") return RawType::f64;
  throw data_error("unknown raw element type '" + s +
                   "' (expected u8, i16, f32 or f64)");
}

namespace detail {

inline constexpr bool kBigEndian = std::endian::native == std::endian::big;

inline std::vector<char> read_all(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  require(is.good(), "cannot open " + path);
  const auto len = static_cast<std::size_t>(is.tellg());
  std::vector<char> buf(len);
  is.seekg(0);
  if (len > 0) is.read(buf.data(), static_cast<std::streamsize>(len));
  require(is.good(), "read failed on " + path);
  return buf;
}

inline double raw_decode(const char* p, RawType t) {
  switch (t) {
    case RawType::u8:
      return static_cast<double>(static_cast<std::uint8_t>(*p));
    case RawType::i16: {
      std::uint16_t u;
      std::memcpy(&u, p, 2);
      if (kBigEndian) u = byteswap16(u);
      return static_cast<double>(static_cast<std::int16_t>(u));
    }
    case RawType::f32: {
      float f;
      std::memcpy(&f, p, 4);
      if (kBigEndian) f = byteswap_float(f);
      return static_cast<double>(f);
    }
    case RawType::f64: {
      double d;
      std::memcpy(&d, p, 8);
      if (kBigEndian) d = byteswap_double(d);
      return d;
    }
  }
  return 0.0;
}

inline void raw_encode(double v, RawType t, std::ostream& os) {
  switch (t) {
    case RawType::u8: {
      const auto u = static_cast<std::uint8_t>(v);
      os.write(reinterpret_cast<const char*>(&u), 1);
      break;
    }
    case RawType::i16: {
      auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(v));
      if (kBigEndian) u = byteswap16(u);
      os.write(reinterpret_cast<const char*>(&u), 2);
      break;
    }
    case RawType::f32: {
      auto f = static_cast<float>(v);
      if (kBigEndian) f = byteswap_float(f);
      os.write(reinterpret_cast<const char*>(&f), 4);
      break;
    }
    case RawType::f64: {
      double d = v;
      if (kBigEndian) d = byteswap_double(d);
      os.write(reinterpret_cast<const char*>(&d), 8);
      break;
    }
  }
}

}  // namespace detail

// Bare little-endian row-major payload; dims come from the caller.
inline Volume load_raw(const std::string& path, int nx, int ny, int nz, RawType t) {
  require(nx >= 1 && ny >= 1 && nz >= 1, "load_raw: dims must be >= 1");
  const std::vector<char> buf = detail::read_all(path);
  const std::size_t expect =
      static_cast<std::size_t>(nx) * ny * nz * raw_element_size(t);
  require(buf.size() == expect,
          "raw volume " + path + ": expected " + std::to_string(expect) +
              " bytes, found " + std::to_string(buf.size()));
  Volume vol(nx, ny, nz);
  vol.source = path;
  const std::size_t es = raw_element_size(t);
  for (std::size_t i = 0; i < vol.size(); ++i)
    vol.v[i] = detail::raw_decode(buf.data() + i * es, t);
  require(vol.all_finite(), "raw volume " + path + " contains non-finite values");
  return vol;
}

inline void save_raw(const Volume& vol, const std::string& path, RawType t) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open " + path + " for writing");
  for (double x : vol.v) detail::raw_encode(x, t, os);
  os.flush();
  require(os.good(), "write failed on " + path);
}

inline LabelVolume load_raw_labels(const std::string& path, int nx, int ny, int nz,
                                   LabelConvention conv = LabelConvention::model) {
  const std::vector<char> buf = detail::read_all(path);
  const std::size_t expect = static_cast<std::size_t>(nx) * ny * nz;
  require(buf.size() == expect,
          "raw labels " + path + ": expected " + std::to_string(expect) +
              " bytes, found " + std::to_string(buf.size()));
  LabelVolume lv(nx, ny, nz, conv);
  std::memcpy(lv.v.data(), buf.data(), expect);
  check_labels(lv);
  return lv;
}

inline void save_raw_labels(const LabelVolume& lv, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(lv.v.data()),
           static_cast<std::streamsize>(lv.v.size()));
  os.flush();
  require(os.good(), "write failed on " + path);
}

// Mean and standard deviation of the nonzero voxels, the basis of per-volume
// normalization. Zero voxels are background air and carry no anatomy.
struct VolumeStats {
  double mean = 0.0;
  double stddev = 1.0;
  std::size_t count = 0;
};

inline VolumeStats nonzero_stats(const Volume& vol) {
  VolumeStats s;
  double sum = 0.0;
  for (double x : vol.v)
    if (x != 0.0) {
      sum += x;
      ++s.count;
    }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (double x : vol.v)
    if (x != 0.0) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(s.count));
  if (s.stddev < 1e-12) s.stddev = 1.0;
  return s;
}

// z-scores the nonzero voxels in place; zeros stay exactly zero so the
// background test (x != 0) keeps working downstream.
inline void normalize_nonzero(Volume& vol, const VolumeStats& s) {
  for (double& x : vol.v)
    if (x != 0.0) x = (x - s.mean) / s.stddev;
}

// Deterministic shuffle-then-cut partition of volume ids.
struct VolumeSplit {
  std::vector<std::string> train, val, test;
};

inline VolumeSplit split_volumes(std::vector<std::string> ids, int n_train,
                                 int n_val, int n_test, std::uint64_t seed) {
  require(n_train >= 0 && n_val >= 0 && n_test >= 0, "split: negative count");
  require(static_cast<std::size_t>(n_train) + n_val + n_test == ids.size(),
          "split: counts " + std::to_string(n_train) + "+" + std::to_string(n_val) +
              "+" + std::to_string(n_test) + " do not sum to " +
              std::to_string(ids.size()) + " volumes");
  Rng rng = seeded_rng(seed, 0x5f11);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(ids[i - 1], ids[j]);
  }
  VolumeSplit sp;
  sp.train.assign(ids.begin(), ids.begin() + n_train);
  sp.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  sp.test.assign(ids.begin() + n_train + n_val, ids.end());
  return sp;
}

}  // namespace usegnet
