#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "usegnet/nifti.hpp"
#include "usegnet/phantom.hpp"
#include "usegnet/volume.hpp"

using namespace usegnet;
using testutil::scratch_dir;

namespace {

Volume random_volume(int nx, int ny, int nz, Rng& rng, double lo = 0.0,
                     double hi = 200.0) {
  Volume vol(nx, ny, nz);
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& x : vol.v) x = d(rng);
  return vol;
}

void patch_f32(const std::string& path, int offset, float value, bool swapped) {
  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  if (swapped) value = byteswap_float(value);
  f.seekp(offset);
  f.write(reinterpret_cast<const char*>(&value), 4);
}

}  // namespace

TEST_CASE("raw f64 volumes round-trip bit-exactly") {
  const std::string dir = scratch_dir("raw");
  Rng rng = seeded_rng(51);
  Volume vol = random_volume(7, 5, 3, rng);
  save_raw(vol, dir + "/v.raw", RawType::f64);
  Volume back = load_raw(dir + "/v.raw", 7, 5, 3, RawType::f64);
  REQUIRE(back.v == vol.v);
}

TEST_CASE("raw u8 and i16 volumes round-trip integer data exactly") {
  const std::string dir = scratch_dir("raw_int");
  Volume vol(4, 3, 2);
  for (std::size_t i = 0; i < vol.v.size(); ++i)
    vol.v[i] = static_cast<double>((i * 11) % 250);
  save_raw(vol, dir + "/u8.raw", RawType::u8);
  CHECK(load_raw(dir + "/u8.raw", 4, 3, 2, RawType::u8).v == vol.v);

  for (std::size_t i = 0; i < vol.v.size(); ++i)
    vol.v[i] = static_cast<double>(static_cast<int>(i * 301) - 3000);
  save_raw(vol, dir + "/i16.raw", RawType::i16);
  CHECK(load_raw(dir + "/i16.raw", 4, 3, 2, RawType::i16).v == vol.v);
}

TEST_CASE("raw loads validate the payload length") {
  const std::string dir = scratch_dir("raw_len");
  Rng rng = seeded_rng(52);
  Volume vol = random_volume(4, 4, 4, rng);
  save_raw(vol, dir + "/v.raw", RawType::f64);
  CHECK_THROWS_WITH(load_raw(dir + "/v.raw", 4, 4, 5, RawType::f64),
                    Catch::Matchers::ContainsSubstring("expected"));
  CHECK_THROWS_AS(load_raw(dir + "/absent.raw", 4, 4, 4, RawType::f64), data_error);
}

TEST_CASE("raw label volumes round-trip and reject bad class ids") {
  const std::string dir = scratch_dir("raw_lab");
  LabelVolume lv(5, 4, 3);
  for (std::size_t i = 0; i < lv.v.size(); ++i)
    lv.v[i] = static_cast<std::uint8_t>(i % 4);
  save_raw_labels(lv, dir + "/l.raw");
  LabelVolume back = load_raw_labels(dir + "/l.raw", 5, 4, 3);
  REQUIRE(back.v == lv.v);

  std::ofstream bad(dir + "/bad.raw", std::ios::binary);
  const char junk[4] = {0, 1, 2, 7};
  bad.write(junk, 4);
  bad.close();
  CHECK_THROWS_AS(load_raw_labels(dir + "/bad.raw", 4, 1, 1), data_error);
}

TEST_CASE("voxel layout is x fastest, then y, then z") {
  Volume vol(3, 4, 5);
  vol.at(2, 1, 3) = 42.0;
  CHECK(vol.v[3 * (4 * 3 + 1) + 2] == 42.0);
  CHECK(vol.slice(3)[1 * 3 + 2] == 42.0);
}

TEST_CASE("label convention remapping is a bijection") {
  LabelVolume ibsr(2, 2, 1, LabelConvention::ibsr);
  ibsr.v = {0, 1, 2, 3};  // bg, CSF, GM, WM in IBSR coding
  LabelVolume model = remap_labels(ibsr, LabelConvention::model);
  CHECK(model.v == std::vector<std::uint8_t>{kBackground, kCsf, kGm, kWm});
  LabelVolume back = remap_labels(model, LabelConvention::ibsr);
  CHECK(back.v == ibsr.v);
  // Already in the requested convention: identity.
  CHECK(remap_labels(model, LabelConvention::model).v == model.v);
}

TEST_CASE("class voxel counts tally every label") {
  LabelVolume lv(2, 3, 1);
  lv.v = {0, 0, 1, 2, 2, 3};
  const auto counts = class_voxel_counts(lv);
  CHECK(counts == std::array<std::size_t, 4>{2, 1, 2, 1});
}

TEST_CASE("normalization z-scores nonzero voxels and leaves zeros alone") {
  Rng rng = seeded_rng(53);
  Volume vol = random_volume(8, 8, 4, rng, 50.0, 250.0);
  // Punch a background region.
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 3; ++x) vol.at(x, y, z) = 0.0;

  const VolumeStats s = nonzero_stats(vol);
  CHECK(s.count == 8 * 8 * 4 - 3 * 8 * 4);
  normalize_nonzero(vol, s);

  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
  for (double x : vol.v)
    if (x != 0.0) {
      mean += x;
      ++n;
    }
  mean /= static_cast<double>(n);
  for (double x : vol.v)
    if (x != 0.0) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(var - 1.0) < 1e-9);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 3; ++x) CHECK(vol.at(x, y, z) == 0.0);
}

TEST_CASE("a constant foreground does not divide by zero") {
  Volume vol(4, 4, 1);
  for (double& x : vol.v) x = 7.0;
  const VolumeStats s = nonzero_stats(vol);
  CHECK(s.stddev == 1.0);
  normalize_nonzero(vol, s);
  for (double x : vol.v) CHECK(x == 0.0);
}

TEST_CASE("volume splits are deterministic partitions") {
  std::vector<std::string> ids;
  for (int i = 0; i < 18; ++i) ids.push_back("vol" + std::to_string(i));

  VolumeSplit a = split_volumes(ids, 6, 3, 9, 42);
  VolumeSplit b = split_volumes(ids, 6, 3, 9, 42);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(a.train.size() == 6);
  CHECK(a.val.size() == 3);
  CHECK(a.test.size() == 9);

  std::vector<std::string> all = a.train;
  all.insert(all.end(), a.val.begin(), a.val.end());
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  CHECK(all == sorted);

  VolumeSplit c = split_volumes(ids, 6, 3, 9, 43);
  CHECK(a.train != c.train);

  CHECK_THROWS_WITH(split_volumes(ids, 6, 3, 8, 42),
                    Catch::Matchers::ContainsSubstring("sum"));
}

TEST_CASE("nifti volumes round-trip voxel-exactly in both byte orders") {
  const std::string dir = scratch_dir("nifti");
  Rng rng = seeded_rng(54);
  Volume vol = random_volume(6, 5, 4, rng);

  for (bool be : {false, true}) {
    const std::string path = dir + (be ? "/be.nii" : "/le.nii");
    save_nifti(vol, path, RawType::f64, be);
    NiftiVolume nv = load_nifti(path);
    CHECK(nv.meta.swapped == (be != detail::kBigEndian));
    CHECK(nv.meta.dim[1] == 6);
    CHECK(nv.meta.dim[2] == 5);
    CHECK(nv.meta.dim[3] == 4);
    CHECK(nv.meta.magic == "n+1");
    REQUIRE(nv.vol.v == vol.v);
  }
}

TEST_CASE("nifti supports u8, i16 and f32 payloads") {
  const std::string dir = scratch_dir("nifti_dtype");
  Volume vol(4, 4, 2);
  for (std::size_t i = 0; i < vol.v.size(); ++i)
    vol.v[i] = static_cast<double>((i * 7) % 200);

  for (bool be : {false, true}) {
    const std::string tag = be ? "be" : "le";
    save_nifti(vol, dir + "/u8_" + tag + ".nii", RawType::u8, be);
    CHECK(load_nifti(dir + "/u8_" + tag + ".nii").vol.v == vol.v);
    save_nifti(vol, dir + "/i16_" + tag + ".nii", RawType::i16, be);
    CHECK(load_nifti(dir + "/i16_" + tag + ".nii").vol.v == vol.v);
    save_nifti(vol, dir + "/f32_" + tag + ".nii", RawType::f32, be);
    CHECK(load_nifti(dir + "/f32_" + tag + ".nii").vol.v == vol.v);
  }
}

TEST_CASE("nifti header-plus-image pairs load through the .img sibling") {
  const std::string dir = scratch_dir("nifti_pair");
  Rng rng = seeded_rng(55);
  Volume vol = random_volume(5, 4, 3, rng);
  save_nifti(vol, dir + "/tmp.nii", RawType::f32, false);
  auto bytes = testutil::read_bytes(dir + "/tmp.nii");

  // Split the single file into a classic header/image pair.
  std::ofstream hdr(dir + "/pair.hdr", std::ios::binary);
  hdr.write(reinterpret_cast<const char*>(bytes.data()), 348);
  hdr.close();
  std::ofstream img(dir + "/pair.img", std::ios::binary);
  img.write(reinterpret_cast<const char*>(bytes.data()) + 352,
            static_cast<std::streamsize>(bytes.size() - 352));
  img.close();
  // Rewrite magic to "ni1" and vox_offset to 0 in the header copy.
  {
    std::fstream f(dir + "/pair.hdr", std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(344);
    f.write("ni1\0", 4);
  }
  patch_f32(dir + "/pair.hdr", 108, 0.0f, false);

  NiftiVolume nv = load_nifti(dir + "/pair.hdr");
  CHECK(nv.meta.magic == "ni1");
  // f32 payload: compare after the same float rounding.
  Volume want = vol;
  for (double& x : want.v) x = static_cast<double>(static_cast<float>(x));
  REQUIRE(nv.vol.v == want.v);
}

TEST_CASE("nifti applies the slope and intercept scaling") {
  const std::string dir = scratch_dir("nifti_scl");
  Volume vol(4, 4, 1);
  for (std::size_t i = 0; i < vol.v.size(); ++i) vol.v[i] = static_cast<double>(i);
  save_nifti(vol, dir + "/scl.nii", RawType::f32, false);
  patch_f32(dir + "/scl.nii", 112, 2.5f, detail::kBigEndian);
  patch_f32(dir + "/scl.nii", 116, 10.0f, detail::kBigEndian);
  NiftiVolume nv = load_nifti(dir + "/scl.nii");
  for (std::size_t i = 0; i < vol.v.size(); ++i)
    CHECK(nv.vol.v[i] == Catch::Approx(2.5 * vol.v[i] + 10.0).margin(1e-6));

  // Slope 0 means unscaled: the intercept must be ignored too.
  patch_f32(dir + "/scl.nii", 112, 0.0f, detail::kBigEndian);
  NiftiVolume raw = load_nifti(dir + "/scl.nii");
  for (std::size_t i = 0; i < vol.v.size(); ++i)
    CHECK(raw.vol.v[i] == Catch::Approx(vol.v[i]).margin(1e-6));
}

TEST_CASE("nifti rejects malformed files with descriptive errors") {
  const std::string dir = scratch_dir("nifti_bad");
  Rng rng = seeded_rng(56);
  Volume vol = random_volume(4, 4, 2, rng);
  save_nifti(vol, dir + "/ok.nii", RawType::f64, false);
  auto bytes = testutil::read_bytes(dir + "/ok.nii");

  auto rewrite = [&](std::vector<unsigned char> buf, const std::string& p) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  };

  auto magic = bytes;
  magic[344] = 'x';
  rewrite(magic, dir + "/magic.nii");
  CHECK_THROWS_WITH(load_nifti(dir + "/magic.nii"),
                    Catch::Matchers::ContainsSubstring("magic"));

  std::vector<unsigned char> short_file(bytes.begin(), bytes.begin() + 100);
  rewrite(short_file, dir + "/short.nii");
  CHECK_THROWS_WITH(load_nifti(dir + "/short.nii"),
                    Catch::Matchers::ContainsSubstring("348"));

  std::vector<unsigned char> trunc(bytes.begin(), bytes.end() - 16);
  rewrite(trunc, dir + "/trunc.nii");
  CHECK_THROWS_WITH(load_nifti(dir + "/trunc.nii"),
                    Catch::Matchers::ContainsSubstring("truncated"));

  auto dtype = bytes;
  dtype[70] = 8;  // int32, unsupported here
  dtype[72] = 32;
  rewrite(dtype, dir + "/dtype.nii");
  CHECK_THROWS_WITH(load_nifti(dir + "/dtype.nii"),
                    Catch::Matchers::ContainsSubstring("datatype"));
}

TEST_CASE("nifti label volumes validate class ids") {
  const std::string dir = scratch_dir("nifti_lab");
  Volume lab(4, 4, 2);
  for (std::size_t i = 0; i < lab.v.size(); ++i)
    lab.v[i] = static_cast<double>(i % 4);
  save_nifti(lab, dir + "/lab.nii", RawType::u8, false);
  LabelVolume lv = load_nifti_labels(dir + "/lab.nii", LabelConvention::ibsr);
  CHECK(lv.convention == LabelConvention::ibsr);
  for (std::size_t i = 0; i < lv.v.size(); ++i)
    CHECK(lv.v[i] == static_cast<std::uint8_t>(i % 4));

  Volume bad(2, 2, 1);
  bad.v = {0.0, 1.0, 2.0, 9.0};
  save_nifti(bad, dir + "/bad.nii", RawType::f32, false);
  CHECK_THROWS_AS(load_nifti_labels(dir + "/bad.nii", LabelConvention::model),
                  data_error);
}

TEST_CASE("phantoms are seed-deterministic") {
  PhantomSpec spec;
  spec.seed = 7;
  PhantomResult a = generate_phantom(spec);
  PhantomResult b = generate_phantom(spec);
  CHECK(a.vol.v == b.vol.v);
  CHECK(a.labels.v == b.labels.v);

  spec.seed = 8;
  PhantomResult c = generate_phantom(spec);
  CHECK(a.vol.v != c.vol.v);
}

TEST_CASE("phantom tissue fractions fall in anatomical ranges") {
  for (std::uint64_t seed : {0ull, 3ull, 11ull, 25ull}) {
    PhantomSpec spec;
    spec.seed = seed;
    PhantomResult pr = generate_phantom(spec);
    const auto counts = class_voxel_counts(pr.labels);
    const double brain =
        static_cast<double>(counts[kGm] + counts[kWm] + counts[kCsf]);
    REQUIRE(brain > 0.0);
    const double gm = 100.0 * counts[kGm] / brain;
    const double wm = 100.0 * counts[kWm] / brain;
    const double csf = 100.0 * counts[kCsf] / brain;
    CHECK(gm > 45.0);
    CHECK(gm < 75.0);
    CHECK(wm > 20.0);
    CHECK(wm < 45.0);
    CHECK(csf > 1.0);
    CHECK(csf < 15.0);
    CHECK(counts[kBackground] > 0u);
  }
}

TEST_CASE("phantom background is exactly zero and tissue is positive") {
  PhantomSpec spec;
  spec.seed = 13;
  PhantomResult pr = generate_phantom(spec);
  for (std::size_t i = 0; i < pr.vol.v.size(); ++i) {
    if (pr.labels.v[i] == kBackground)
      REQUIRE(pr.vol.v[i] == 0.0);
    else
      REQUIRE(pr.vol.v[i] >= 1.0);
  }
}

TEST_CASE("the threshold oracle recovers clean phantom labels exactly") {
  PhantomSpec spec;
  spec.seed = 21;
  spec.noise_std = 0.0;
  spec.bias_amplitude = 0.0;
  PhantomResult pr = generate_phantom(spec);
  LabelVolume oracle = threshold_oracle(pr.vol, spec);
  REQUIRE(oracle.v == pr.labels.v);
}

TEST_CASE("phantom rejects invalid specifications") {
  PhantomSpec small;
  small.nx = 32;
  CHECK_THROWS_AS(generate_phantom(small), data_error);
  PhantomSpec order;
  order.gm_mean = 200.0;  // above wm_mean
  CHECK_THROWS_AS(generate_phantom(order), data_error);
}
