#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "usegnet/tensor.hpp"
#include "usegnet/volume.hpp"

namespace usegnet {

inline constexpr int kPatch = 40;
inline constexpr int kStride = 10;

// Window origins along one axis: every multiple of the stride that fits,
// plus a clamped final origin so the last pixels are always covered.
inline std::vector<int> tile_positions(int dim, int patch = kPatch,
                                       int stride = kStride) {
  require(patch >= 1 && stride >= 1, "tiling: patch and stride must be >= 1");
  require(dim >= patch, "tiling: dimension " + std::to_string(dim) +
                            " smaller than patch size " + std::to_string(patch));
  std::vector<int> origins;
  for (int o = 0; o + patch <= dim; o += stride) origins.push_back(o);
  if (origins.back() != dim - patch) origins.push_back(dim - patch);
  return origins;
}

struct TilePlan {
  int h = 0, w = 0;
  std::vector<int> y_origins, x_origins;
};

inline TilePlan make_tile_plan(int h, int w) {
  return {h, w, tile_positions(h), tile_positions(w)};
}

// One training/inference unit: a 40x40 window over three adjacent axial
// slices, labeled on the middle slice.
struct PatchStack {
  Tensor input;     // (1, 3, 40, 40): slices z-1, z, z+1
  LabelMap labels;  // (1, 40, 40), slice z
  int volume = -1, z = 0, y = 0, x = 0;
};

// Slice coordinates: the axial plane is nx wide (x fastest) and ny tall, so
// patch row y+dy, column x+dx reads voxel (x+dx, y+dy, z). Missing neighbor
// slices at the volume ends are replaced by replicating the edge slice.
inline PatchStack extract_patch_stack(const Volume& vol, const LabelVolume& lab,
                                      int z, int y, int x) {
  require(vol.nx == lab.nx && vol.ny == lab.ny && vol.nz == lab.nz,
          "patch: volume and label dims differ");
  require(z >= 0 && z < vol.nz, "patch: slice " + std::to_string(z) +
                                    " outside [0," + std::to_string(vol.nz) + ")");
  require(y >= 0 && y + kPatch <= vol.ny && x >= 0 && x + kPatch <= vol.nx,
          "patch: origin (" + std::to_string(y) + "," + std::to_string(x) +
              ") outside the slice");

  PatchStack ps;
  ps.z = z;
  ps.y = y;
  ps.x = x;
  ps.input = Tensor(1, 3, kPatch, kPatch);
  ps.labels = LabelMap(1, kPatch, kPatch);
  for (int c = 0; c < 3; ++c) {
    const int zs = std::clamp(z - 1 + c, 0, vol.nz - 1);
    double* dst = ps.input.plane(0, c);
    for (int dy = 0; dy < kPatch; ++dy) {
      const double* row = vol.slice(zs) + static_cast<std::size_t>(y + dy) * vol.nx + x;
      std::copy(row, row + kPatch, dst + static_cast<std::size_t>(dy) * kPatch);
    }
  }
  for (int dy = 0; dy < kPatch; ++dy) {
    const std::uint8_t* row =
        lab.slice(z) + static_cast<std::size_t>(y + dy) * lab.nx + x;
    std::copy(row, row + kPatch, &ps.labels.at(0, dy, 0));
  }
  return ps;
}

enum class DatasetRole { train, val, test };

struct PatchOrigin {
  int volume = 0, z = 0, y = 0, x = 0;
};

// Volumes (normalized in place), their labels, and the ordered list of patch
// origins. Patches themselves are materialized per batch, not stored.
struct Dataset {
  std::vector<Volume> volumes;
  std::vector<LabelVolume> labels;
  std::vector<VolumeStats> stats;
  std::vector<PatchOrigin> refs;
  DatasetRole role = DatasetRole::train;

  std::size_t size() const { return refs.size(); }
};

// Per-volume z-scoring over nonzero voxels; each volume uses only its own
// statistics, so nothing leaks between train and evaluation volumes.
inline void normalize_dataset(Dataset& ds) {
  ds.stats.clear();
  for (Volume& vol : ds.volumes) {
    const VolumeStats s = nonzero_stats(vol);
    normalize_nonzero(vol, s);
    ds.stats.push_back(s);
  }
}

// Drops patches whose background fraction reaches the threshold. The default
// threshold 1.0 removes exactly the all-background patches.
inline Dataset filter_background(Dataset ds, double max_bg_fraction) {
  require(max_bg_fraction >= 0.0 && max_bg_fraction <= 1.0,
          "filter: threshold must lie in [0,1]");
  std::vector<PatchOrigin> kept;
  for (const PatchOrigin& ref : ds.refs) {
    const LabelVolume& lab = ds.labels[ref.volume];
    std::size_t bg = 0;
    for (int dy = 0; dy < kPatch; ++dy) {
      const std::uint8_t* row =
          lab.slice(ref.z) + static_cast<std::size_t>(ref.y + dy) * lab.nx + ref.x;
      for (int dx = 0; dx < kPatch; ++dx) bg += row[dx] == kBackground;
    }
    const double frac = static_cast<double>(bg) / (kPatch * kPatch);
    if (frac < max_bg_fraction) kept.push_back(ref);
  }
  ds.refs = std::move(kept);
  return ds;
}

// Enumerates every tile origin of every axial slice of every volume in a
// fixed order (volume, z, y, x), normalizes, and background-filters training
// data only.
inline Dataset build_dataset(std::vector<Volume> volumes,
                             std::vector<LabelVolume> labels, DatasetRole role,
                             double max_bg_fraction = 1.0) {
  require(volumes.size() == labels.size(),
          "dataset: " + std::to_string(volumes.size()) + " volumes vs " +
              std::to_string(labels.size()) + " label volumes");
  Dataset ds;
  ds.role = role;
  ds.volumes = std::move(volumes);
  ds.labels = std::move(labels);
  for (std::size_t i = 0; i < ds.volumes.size(); ++i) {
    const Volume& vol = ds.volumes[i];
    const LabelVolume& lab = ds.labels[i];
    require(lab.convention == LabelConvention::model,
            "dataset: labels of volume " + std::to_string(i) +
                " are not in the model convention");
    require(vol.nx == lab.nx && vol.ny == lab.ny && vol.nz == lab.nz,
            "dataset: volume " + std::to_string(i) + " dims differ from labels");
    check_labels(lab);
    const TilePlan plan = make_tile_plan(vol.ny, vol.nx);
    for (int z = 0; z < vol.nz; ++z)
      for (int y : plan.y_origins)
        for (int x : plan.x_origins)
          ds.refs.push_back({static_cast<int>(i), z, y, x});
  }
  normalize_dataset(ds);
  if (role == DatasetRole::train) ds = filter_background(std::move(ds), max_bg_fraction);
  return ds;
}

// Gathers the listed patches into one network input batch.
inline std::pair<Tensor, LabelMap> assemble_batch(
    const Dataset& ds, const std::vector<std::size_t>& ids) {
  require(!ids.empty(), "batch: empty patch list");
  Tensor input(static_cast<int>(ids.size()), 3, kPatch, kPatch);
  LabelMap labels(static_cast<int>(ids.size()), kPatch, kPatch);
  for (std::size_t b = 0; b < ids.size(); ++b) {
    require(ids[b] < ds.refs.size(), "batch: patch index out of range");
    const PatchOrigin& ref = ds.refs[ids[b]];
    PatchStack ps = extract_patch_stack(ds.volumes[ref.volume],
                                        ds.labels[ref.volume], ref.z, ref.y, ref.x);
    std::copy(ps.input.data(), ps.input.data() + ps.input.size(),
              input.plane(static_cast<int>(b), 0));
    std::copy(ps.labels.v.begin(), ps.labels.v.end(),
              labels.v.begin() + b * static_cast<std::size_t>(kPatch) * kPatch);
  }
  return {std::move(input), std::move(labels)};
}

}  // namespace usegnet
