#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "usegnet/volume.hpp"

namespace usegnet {

// Minimal NIfTI-1 support: the 348-byte header fields needed for scalar
// anatomical volumes (dim, datatype, bitpix, vox_offset, scl_slope/inter,
// magic), with byte order detected via the dim[0] in [1,7] rule. Orientation
// matrices are ignored; slicing follows the stored Z axis.

struct NiftiMeta {
  std::array<int, 8> dim{};
  int datatype = 0;
  int bitpix = 0;
  double vox_offset = 0.0;
  double scl_slope = 1.0;
  double scl_inter = 0.0;
  bool swapped = false;     // file byte order opposite to this machine
  std::string magic;        // "n+1" or "ni1"
};

struct NiftiVolume {
  Volume vol;
  NiftiMeta meta;
};

namespace detail {

inline std::int16_t nii_i16(const char* p, bool swap) {
  std::uint16_t u;
  std::memcpy(&u, p, 2);
  if (swap) u = byteswap16(u);
  std::int16_t s;
  std::memcpy(&s, &u, 2);
  return s;
}

inline std::int32_t nii_i32(const char* p, bool swap) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if (swap) u = byteswap32(u);
  std::int32_t s;
  std::memcpy(&s, &u, 4);
  return s;
}

inline float nii_f32(const char* p, bool swap) {
  float f;
  std::memcpy(&f, p, 4);
  if (swap) f = byteswap_float(f);
  return f;
}

inline std::string img_sibling(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path + ".img";
  return path.substr(0, dot) + ".img";
}

}  // namespace detail

inline NiftiVolume load_nifti(const std::string& path) {
  const std::vector<char> hdr_file = detail::read_all(path);
  require(hdr_file.size() >= 348,
          "nifti " + path + ": file shorter than the 348-byte header");
  const char* h = hdr_file.data();

  char magic_raw[4];
  std::memcpy(magic_raw, h + 344, 4);
  const std::string magic(magic_raw, magic_raw + 3);
  require((magic == "n+1" || magic == "ni1") && magic_raw[3] == '\0',
          "nifti " + path + ": magic field is not \"n+1\" or \"ni1\"");

  // Stored dim[0] must be a sane rank; if it is not, the file was written on
  // a machine of the opposite byte order.
  bool swap = false;
  std::int16_t rank = detail::nii_i16(h + 40, false);
  if (rank < 1 || rank > 7) {
    swap = true;
    rank = detail::nii_i16(h + 40, true);
    require(rank >= 1 && rank <= 7,
            "nifti " + path + ": dim[0] invalid under both byte orders");
  }

  NiftiMeta meta;
  meta.swapped = swap;
  meta.magic = magic;
  for (int i = 0; i < 8; ++i)
    meta.dim[i] = detail::nii_i16(h + 40 + 2 * i, swap);
  meta.datatype = detail::nii_i16(h + 70, swap);
  meta.bitpix = detail::nii_i16(h + 72, swap);
  meta.vox_offset = detail::nii_f32(h + 108, swap);
  meta.scl_slope = detail::nii_f32(h + 112, swap);
  meta.scl_inter = detail::nii_f32(h + 116, swap);

  require(meta.dim[0] >= 3, "nifti " + path + ": expected a 3-D volume, rank " +
                                std::to_string(meta.dim[0]));
  for (int i = 4; i <= meta.dim[0]; ++i)
    require(meta.dim[i] <= 1, "nifti " + path +
                                  ": higher dimensions present (dim[" +
                                  std::to_string(i) + "] = " +
                                  std::to_string(meta.dim[i]) + ")");
  const int nx = meta.dim[1], ny = meta.dim[2], nz = meta.dim[3];
  require(nx >= 1 && ny >= 1 && nz >= 1, "nifti " + path + ": degenerate dims");

  RawType t;
  switch (meta.datatype) {
    case 2: t = RawType::u8; break;
    case 4: t = RawType::i16; break;
    case 16: t = RawType::f32; break;
    case 64: t = RawType::f64; break;
    default:
      throw data_error("nifti " + path + ": unsupported datatype " +
                       std::to_string(meta.datatype) +
                       " (supported: 2, 4, 16, 64)");
  }
  const std::size_t es = raw_element_size(t);
  require(meta.bitpix == static_cast<int>(8 * es),
          "nifti " + path + ": bitpix " + std::to_string(meta.bitpix) +
              " inconsistent with datatype");

  const std::size_t nvox = static_cast<std::size_t>(nx) * ny * nz;
  const char* payload;
  std::vector<char> img_file;
  std::size_t avail;
  if (magic == "n+1") {
    const auto off = static_cast<std::size_t>(meta.vox_offset);
    require(off >= 348, "nifti " + path + ": vox_offset inside the header");
    require(hdr_file.size() >= off, "nifti " + path + ": truncated payload");
    payload = h + off;
    avail = hdr_file.size() - off;
  } else {
    img_file = detail::read_all(detail::img_sibling(path));
    const auto off = static_cast<std::size_t>(meta.vox_offset);
    require(img_file.size() >= off, "nifti " + path + ": truncated payload");
    payload = img_file.data() + off;
    avail = img_file.size() - off;
  }
  require(avail >= nvox * es, "nifti " + path + ": truncated payload (need " +
                                  std::to_string(nvox * es) + " bytes, have " +
                                  std::to_string(avail) + ")");

  // scl_slope 0 means unscaled data per the standard.
  const double slope = meta.scl_slope == 0.0 ? 1.0 : meta.scl_slope;
  const double inter = meta.scl_slope == 0.0 ? 0.0 : meta.scl_inter;

  Volume vol(nx, ny, nz);
  vol.source = path;
  for (std::size_t i = 0; i < nvox; ++i) {
    double raw;
    const char* p = payload + i * es;
    switch (t) {
      case RawType::u8:
        raw = static_cast<double>(static_cast<std::uint8_t>(*p));
        break;
      case RawType::i16: {
        std::uint16_t u;
        std::memcpy(&u, p, 2);
        if (swap) u = byteswap16(u);
        std::int16_t s;
        std::memcpy(&s, &u, 2);
        raw = static_cast<double>(s);
        break;
      }
      case RawType::f32: {
        float f;
        std::memcpy(&f, p, 4);
        if (swap) f = byteswap_float(f);
        raw = static_cast<double>(f);
        break;
      }
      case RawType::f64: {
        double d;
        std::memcpy(&d, p, 8);
        if (swap) d = byteswap_double(d);
        raw = d;
        break;
      }
      default:
        raw = 0.0;
    }
    vol.v[i] = slope * raw + inter;
  }
  require(vol.all_finite(), "nifti " + path + ": non-finite voxel values");
  return {std::move(vol), meta};
}

// Loads a NIfTI file whose voxels are integer class ids.
inline LabelVolume load_nifti_labels(const std::string& path,
                                     LabelConvention conv) {
  NiftiVolume nv = load_nifti(path);
  LabelVolume lv(nv.vol.nx, nv.vol.ny, nv.vol.nz, conv);
  for (std::size_t i = 0; i < nv.vol.v.size(); ++i) {
    const double x = nv.vol.v[i];
    const double r = std::nearbyint(x);
    require(std::abs(x - r) < 1e-6 && r >= 0.0 && r <= 3.0,
            "nifti labels " + path + ": voxel value " + std::to_string(x) +
                " is not a class id in {0,1,2,3}");
    lv.v[i] = static_cast<std::uint8_t>(r);
  }
  return lv;
}

namespace detail {

inline void nii_put_i16(char* h, int off, std::int16_t v, bool be) {
  std::uint16_t u;
  std::memcpy(&u, &v, 2);
  if (be != kBigEndian) u = byteswap16(u);
  std::memcpy(h + off, &u, 2);
}

inline void nii_put_i32(char* h, int off, std::int32_t v, bool be) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  if (be != kBigEndian) u = byteswap32(u);
  std::memcpy(h + off, &u, 4);
}

inline void nii_put_f32(char* h, int off, float v, bool be) {
  if (be != kBigEndian) v = byteswap_float(v);
  std::memcpy(h + off, &v, 4);
}

}  // namespace detail

// Writes a single-file (.nii, magic "n+1") volume with payload at offset 352.
// big_endian selects the stored byte order regardless of the host's.
inline void save_nifti(const Volume& vol, const std::string& path, RawType t,
                       bool big_endian = false) {
  std::array<char, 352> hdr{};
  char* h = hdr.data();
  detail::nii_put_i32(h, 0, 348, big_endian);
  detail::nii_put_i16(h, 40, 3, big_endian);  // dim[0]
  detail::nii_put_i16(h, 42, static_cast<std::int16_t>(vol.nx), big_endian);
  detail::nii_put_i16(h, 44, static_cast<std::int16_t>(vol.ny), big_endian);
  detail::nii_put_i16(h, 46, static_cast<std::int16_t>(vol.nz), big_endian);
  for (int i = 4; i < 8; ++i)
    detail::nii_put_i16(h, 40 + 2 * i, 1, big_endian);
  int code = 0;
  switch (t) {
    case RawType::u8: code = 2; break;
    case RawType::i16: code = 4; break;
    case RawType::f32: code = 16; break;
    case RawType::f64: code = 64; break;
  }
  detail::nii_put_i16(h, 70, static_cast<std::int16_t>(code), big_endian);
  detail::nii_put_i16(h, 72, static_cast<std::int16_t>(8 * raw_element_size(t)),
                      big_endian);
  for (int i = 0; i < 8; ++i)
    detail::nii_put_f32(h, 76 + 4 * i, 1.0f, big_endian);
  detail::nii_put_f32(h, 108, 352.0f, big_endian);  // vox_offset
  detail::nii_put_f32(h, 112, 1.0f, big_endian);    // scl_slope
  detail::nii_put_f32(h, 116, 0.0f, big_endian);    // scl_inter
  std::memcpy(h + 344, "n+1", 4);

  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open " + path + " for writing");
  os.write(h, 352);
  for (double x : vol.v) {
    switch (t) {
      case RawType::u8: {
        const auto u = static_cast<std::uint8_t>(x);
        os.write(reinterpret_cast<const char*>(&u), 1);
        break;
      }
      case RawType::i16: {
        auto s = static_cast<std::int16_t>(x);
        std::uint16_t u;
        std::memcpy(&u, &s, 2);
        if (big_endian != detail::kBigEndian) u = byteswap16(u);
        os.write(reinterpret_cast<const char*>(&u), 2);
        break;
      }
      case RawType::f32: {
        auto f = static_cast<float>(x);
        if (big_endian != detail::kBigEndian) f = byteswap_float(f);
        os.write(reinterpret_cast<const char*>(&f), 4);
        break;
      }
      case RawType::f64: {
        double d = x;
        if (big_endian != detail::kBigEndian) d = byteswap_double(d);
        os.write(reinterpret_cast<const char*>(&d), 8);
        break;
      }
    }
  }
  os.flush();
  require(os.good(), "write failed on " + path);
}

}  // namespace usegnet
