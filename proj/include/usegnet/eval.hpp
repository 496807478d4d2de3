#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "usegnet/graph.hpp"
#include "usegnet/patches.hpp"

namespace usegnet {

enum class FusionMode { majority, average };

inline FusionMode parse_fusion(const std::string& s) {
  if (s == "majority") return FusionMode::majority;
  if (s == "average") return FusionMode::average;
  throw data_error("unknown fusion mode '" + s + "' (expected majority or average)");
}

// Per-pixel accumulator for one axial slice: label vote counts in majority
// mode, summed class probabilities in average mode, plus the number of
// covering patches either way.
class VoteGrid {
 public:
  VoteGrid(int h, int w)
      : h_(h), w_(w), acc_(static_cast<std::size_t>(h) * w * 4, 0.0),
        cover_(static_cast<std::size_t>(h) * w, 0) {}

  int h() const { return h_; }
  int w() const { return w_; }

  void add_vote(int y, int x, int cls) {
    acc_[(static_cast<std::size_t>(y) * w_ + x) * 4 + cls] += 1.0;
    ++cover_[static_cast<std::size_t>(y) * w_ + x];
  }

  void add_probs(int y, int x, const std::array<double, 4>& p) {
    double* a = &acc_[(static_cast<std::size_t>(y) * w_ + x) * 4];
    for (int c = 0; c < 4; ++c) a[c] += p[c];
    ++cover_[static_cast<std::size_t>(y) * w_ + x];
  }

  int coverage(int y, int x) const {
    return cover_[static_cast<std::size_t>(y) * w_ + x];
  }

  // Highest accumulated mass wins; exact ties go to the lowest class index.
  std::uint8_t resolve(int y, int x) const {
    require(coverage(y, x) > 0, "vote grid: pixel (" + std::to_string(y) + "," +
                                    std::to_string(x) + ") has no votes");
    const double* a = &acc_[(static_cast<std::size_t>(y) * w_ + x) * 4];
    int best = 0;
    for (int c = 1; c < 4; ++c)
      if (a[c] > a[best]) best = c;
    return static_cast<std::uint8_t>(best);
  }

 private:
  int h_, w_;
  std::vector<double> acc_;
  std::vector<int> cover_;
};

// Segments a whole volume slice by slice: every tile's patch stack goes
// through the network in inference mode, patch predictions are fused on a
// VoteGrid, and each pixel takes the fused label. The input volume must
// already be normalized the same way the training data was.
inline LabelVolume segment_volume(Network& net, const Volume& vol,
                                  FusionMode fusion, int batch_size = 16) {
  require(vol.nz >= 1, "segment: volume has no slices");
  require(vol.nx >= kPatch && vol.ny >= kPatch,
          "segment: slice smaller than a patch");
  require(batch_size >= 1, "segment: batch size must be >= 1");

  const TilePlan plan = make_tile_plan(vol.ny, vol.nx);
  // Patch extraction wants paired labels; slice labels are unused here.
  const LabelVolume dummy(vol.nx, vol.ny, vol.nz);
  LabelVolume out(vol.nx, vol.ny, vol.nz, LabelConvention::model);

  std::vector<std::pair<int, int>> tiles;
  for (int y : plan.y_origins)
    for (int x : plan.x_origins) tiles.emplace_back(y, x);

  for (int z = 0; z < vol.nz; ++z) {
    VoteGrid grid(vol.ny, vol.nx);
    std::size_t done = 0;
    while (done < tiles.size()) {
      const std::size_t take =
          std::min<std::size_t>(batch_size, tiles.size() - done);
      Tensor input(static_cast<int>(take), 3, kPatch, kPatch);
      for (std::size_t b = 0; b < take; ++b) {
        const auto [py, px] = tiles[done + b];
        PatchStack ps = extract_patch_stack(vol, dummy, z, py, px);
        std::copy(ps.input.data(), ps.input.data() + ps.input.size(),
                  input.plane(static_cast<int>(b), 0));
      }
      const Tensor logits = net.forward_infer(input);
      const Tensor probs = softmax_channels(logits);
      for (std::size_t b = 0; b < take; ++b) {
        const auto [py, px] = tiles[done + b];
        for (int dy = 0; dy < kPatch; ++dy)
          for (int dx = 0; dx < kPatch; ++dx) {
            std::array<double, 4> p;
            for (int c = 0; c < 4; ++c)
              p[c] = probs.at(static_cast<int>(b), c, dy, dx);
            if (fusion == FusionMode::majority) {
              int best = 0;
              for (int c = 1; c < 4; ++c)
                if (p[c] > p[best]) best = c;
              grid.add_vote(py + dy, px + dx, best);
            } else {
              grid.add_probs(py + dy, px + dx, p);
            }
          }
      }
      done += take;
    }
    for (int y = 0; y < vol.ny; ++y)
      for (int x = 0; x < vol.nx; ++x)
        out.at(x, y, z) = grid.resolve(y, x);
  }
  return out;
}

using ConfusionMatrix = std::array<std::array<std::size_t, 4>, 4>;

// cm[t][p] counts voxels of truth class t predicted as class p.
inline ConfusionMatrix confusion_matrix(const LabelVolume& pred,
                                        const LabelVolume& truth) {
  require(pred.nx == truth.nx && pred.ny == truth.ny && pred.nz == truth.nz,
          "confusion: prediction and truth dims differ");
  require(pred.convention == truth.convention,
          "confusion: label conventions differ");
  ConfusionMatrix cm{};
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    require(pred.v[i] <= 3 && truth.v[i] <= 3, "confusion: label out of range");
    ++cm[truth.v[i]][pred.v[i]];
  }
  return cm;
}

// Dice = 100 * 2TP / (2TP + FP + FN) for one tissue class; a class absent
// from both volumes scores 100 (nothing to get wrong).
inline double dice_per_class(const ConfusionMatrix& cm, int cls) {
  require(cls >= 1 && cls <= 3, "dice: class must be 1 (GM), 2 (WM) or 3 (CSF)");
  const std::size_t tp = cm[cls][cls];
  std::size_t fp = 0, fn = 0;
  for (int t = 0; t < 4; ++t)
    if (t != cls) fp += cm[t][cls];
  for (int p = 0; p < 4; ++p)
    if (p != cls) fn += cm[cls][p];
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 100.0;
  return 100.0 * 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

// Combination weighted by the mean tissue volume fractions (GM 65.84%,
// WM 32.80%, CSF 1.35%), applied to percentages as-is.
inline double weighted_dice(double gm, double wm, double csf) {
  require(gm >= 0.0 && gm <= 100.0 && wm >= 0.0 && wm <= 100.0 && csf >= 0.0 &&
              csf <= 100.0,
          "weighted dice: inputs must lie in [0,100]");
  return 0.6584 * gm + 0.3280 * wm + 0.0135 * csf;
}

struct VolumeEval {
  std::string id;
  double gm = 0, wm = 0, csf = 0, weighted = 0;
  ConfusionMatrix cm{};
};

struct EvalReport {
  std::vector<VolumeEval> volumes;
  // Per-class Dice averaged over volumes, weighted Dice from those averages.
  double gm = 0, wm = 0, csf = 0, weighted = 0;
  // Same metrics over the pooled voxel counts of all volumes.
  double pooled_gm = 0, pooled_wm = 0, pooled_csf = 0, pooled_weighted = 0;
  ConfusionMatrix pooled_cm{};
};

// Metrics for already-computed predictions.
inline EvalReport evaluate_predictions(const std::vector<std::string>& ids,
                                       const std::vector<LabelVolume>& preds,
                                       const std::vector<LabelVolume>& truths) {
  require(!preds.empty(), "evaluate: empty test set");
  require(preds.size() == truths.size() && ids.size() == preds.size(),
          "evaluate: ids/predictions/truths count mismatch");
  EvalReport rep;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    VolumeEval ve;
    ve.id = ids[i];
    ve.cm = confusion_matrix(preds[i], truths[i]);
    ve.gm = dice_per_class(ve.cm, kGm);
    ve.wm = dice_per_class(ve.cm, kWm);
    ve.csf = dice_per_class(ve.cm, kCsf);
    ve.weighted = weighted_dice(ve.gm, ve.wm, ve.csf);
    for (int t = 0; t < 4; ++t)
      for (int p = 0; p < 4; ++p) rep.pooled_cm[t][p] += ve.cm[t][p];
    rep.volumes.push_back(std::move(ve));
  }
  const double n = static_cast<double>(rep.volumes.size());
  for (const VolumeEval& ve : rep.volumes) {
    rep.gm += ve.gm / n;
    rep.wm += ve.wm / n;
    rep.csf += ve.csf / n;
  }
  rep.weighted = weighted_dice(rep.gm, rep.wm, rep.csf);
  rep.pooled_gm = dice_per_class(rep.pooled_cm, kGm);
  rep.pooled_wm = dice_per_class(rep.pooled_cm, kWm);
  rep.pooled_csf = dice_per_class(rep.pooled_cm, kCsf);
  rep.pooled_weighted =
      weighted_dice(rep.pooled_gm, rep.pooled_wm, rep.pooled_csf);
  return rep;
}

// Full pipeline: normalize each raw test volume, segment it with the
// network, and score against the truth.
inline EvalReport evaluate(Network& net, const std::vector<std::string>& ids,
                           const std::vector<Volume>& volumes,
                           const std::vector<LabelVolume>& truths,
                           FusionMode fusion) {
  require(!volumes.empty(), "evaluate: empty test set");
  require(volumes.size() == truths.size() && ids.size() == volumes.size(),
          "evaluate: ids/volumes/truths count mismatch");
  std::vector<LabelVolume> preds;
  for (const Volume& raw : volumes) {
    Volume vol = raw;
    normalize_nonzero(vol, nonzero_stats(vol));
    preds.push_back(segment_volume(net, vol, fusion));
  }
  std::vector<LabelVolume> model_truths;
  for (const LabelVolume& t : truths)
    model_truths.push_back(remap_labels(t, LabelConvention::model));
  return evaluate_predictions(ids, preds, model_truths);
}

inline void write_report_csv(const EvalReport& rep, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "cannot open " + path + " for writing");
  os << "volume_id,dice_gm,dice_wm,dice_csf,weighted\n";
  char buf[160];
  for (const VolumeEval& ve : rep.volumes) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f\n", ve.id.c_str(),
                  ve.gm, ve.wm, ve.csf, ve.weighted);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.4f,%.4f,%.4f,%.4f\n", rep.gm, rep.wm,
                rep.csf, rep.weighted);
  os << buf;
  std::snprintf(buf, sizeof buf, "pooled,%.4f,%.4f,%.4f,%.4f\n", rep.pooled_gm,
                rep.pooled_wm, rep.pooled_csf, rep.pooled_weighted);
  os << buf;
  os.flush();
  require(os.good(), "write failed on " + path);
}

inline std::string format_report_table(const EvalReport& rep) {
  char buf[160];
  std::string s = "volume            GM      WM     CSF  Wt. DC\n";
  for (const VolumeEval& ve : rep.volumes) {
    std::snprintf(buf, sizeof buf, "%-14s %6.2f  %6.2f  %6.2f  %6.2f\n",
                  ve.id.c_str(), ve.gm, ve.wm, ve.csf, ve.weighted);
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "%-14s %6.2f  %6.2f  %6.2f  %6.2f\n", "mean",
                rep.gm, rep.wm, rep.csf, rep.weighted);
  s += buf;
  std::snprintf(buf, sizeof buf, "%-14s %6.2f  %6.2f  %6.2f  %6.2f\n", "pooled",
                rep.pooled_gm, rep.pooled_wm, rep.pooled_csf, rep.pooled_weighted);
  s += buf;
  return s;
}

// Binary PPM of one axial slice: background black, GM green, WM blue,
// CSF red.
inline void export_overlay(const LabelVolume& lv, int z, const std::string& path) {
  require(z >= 0 && z < lv.nz, "overlay: slice " + std::to_string(z) +
                                   " outside [0," + std::to_string(lv.nz) + ")");
  static constexpr std::uint8_t colors[4][3] = {
      {0, 0, 0}, {0, 255, 0}, {0, 0, 255}, {255, 0, 0}};
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open " + path + " for writing");
  os << "P6\n" << lv.nx << " " << lv.ny << "\n255\n";
  for (int y = 0; y < lv.ny; ++y)
    for (int x = 0; x < lv.nx; ++x) {
      const std::uint8_t lab = lv.at(x, y, z);
      require(lab <= 3, "overlay: label out of range");
      os.write(reinterpret_cast<const char*>(colors[lab]), 3);
    }
  os.flush();
  require(os.good(), "write failed on " + path);
}

}  // namespace usegnet
