#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "usegnet/volume.hpp"

namespace usegnet {

// Synthetic stand-in for a T1 head volume: nested deformed ellipsoids with a
// thin outer CSF shell, a folded GM ribbon, a WM core carrying two CSF
// ventricle cavities, a multiplicative low-frequency bias field and additive
// Gaussian noise. Labels come from the generating geometry, so they are
// exact ground truth.
struct PhantomSpec {
  int nx = 64, ny = 64, nz = 16;
  std::uint64_t seed = 0;
  double noise_std = 0.15;      // fraction of the smallest tissue-mean gap
  double bias_amplitude = 0.2;  // multiplicative field strength
  double csf_mean = 60.0, gm_mean = 110.0, wm_mean = 160.0;
};

struct PhantomResult {
  Volume vol;
  LabelVolume labels;
};

inline PhantomResult generate_phantom(const PhantomSpec& spec) {
  require(spec.nx >= 48 && spec.ny >= 48,
          "phantom: in-plane dims must be >= 48 for 40x40 patches, got " +
              std::to_string(spec.nx) + "x" + std::to_string(spec.ny));
  require(spec.nz >= 1, "phantom: nz must be >= 1");
  require(spec.noise_std >= 0.0, "phantom: noise_std must be >= 0");
  require(spec.bias_amplitude >= 0.0, "phantom: bias_amplitude must be >= 0");
  require(0.0 < spec.csf_mean && spec.csf_mean < spec.gm_mean &&
              spec.gm_mean < spec.wm_mean,
          "phantom: tissue means must satisfy 0 < CSF < GM < WM");

  constexpr double pi = std::numbers::pi;
  Rng rng = seeded_rng(spec.seed, 0x9a17);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  const double nx = spec.nx, ny = spec.ny, nz = spec.nz;
  const double cx = 0.5 * (nx - 1) + 0.02 * nx * unit(rng);
  const double cy = 0.5 * (ny - 1) + 0.02 * ny * unit(rng);
  const double cz = 0.5 * (nz - 1) + 0.02 * nz * unit(rng);
  const double ax = 0.42 * nx * (1.0 + 0.03 * unit(rng));
  const double ay = 0.42 * ny * (1.0 + 0.03 * unit(rng));
  const double az = 0.42 * nz * (1.0 + 0.03 * unit(rng));

  // Normalized radii of the tissue interfaces and the fold/deform phases.
  const double r_csf = 0.97;  // outer surface at 1.0, CSF shell below it
  const double r_gw = 0.72;   // mean GM-WM interface
  const double fold_amp = 0.05;
  const double ph_fold1 = pi * unit(rng), ph_fold2 = pi * unit(rng);
  const double ph_out1 = pi * unit(rng), ph_out2 = pi * unit(rng);
  const double ph_b1 = pi * unit(rng), ph_b2 = pi * unit(rng),
               ph_b3 = pi * unit(rng);

  // Two ventricles: small ellipsoids elongated front-to-back, placed
  // symmetrically about the midline well inside the WM core.
  const double vy_shift = 0.04 * ay * unit(rng);
  struct Ventricle {
    double cx, cy, cz, ax, ay, az;
  };
  const Ventricle vents[2] = {
      {cx - 0.18 * ax, cy + vy_shift, cz, 0.10 * ax, 0.24 * ay, 0.32 * az},
      {cx + 0.18 * ax, cy + vy_shift, cz, 0.10 * ax, 0.24 * ay, 0.32 * az},
  };

  LabelVolume labels(spec.nx, spec.ny, spec.nz, LabelConvention::model);
  for (int z = 0; z < spec.nz; ++z)
    for (int y = 0; y < spec.ny; ++y)
      for (int x = 0; x < spec.nx; ++x) {
        const double u = (x - cx) / ax;
        const double v = (y - cy) / ay;
        const double w = (z - cz) / az;
        const double r = std::sqrt(u * u + v * v + w * w);
        const double theta = std::atan2(v, u);
        const double psi = std::atan2(w, std::sqrt(u * u + v * v));
        // Gentle whole-surface deformation plus the stronger GM-WM folding.
        const double d_out =
            0.02 * std::sin(3.0 * theta + ph_out1) * std::cos(2.0 * psi + ph_out2);
        const double fold = fold_amp * std::sin(6.0 * theta + ph_fold1) *
                            std::cos(4.0 * psi + ph_fold2);
        const double rr = r - d_out;

        std::uint8_t lab = kBackground;
        if (rr <= 1.0) {
          if (rr > r_csf)
            lab = kCsf;
          else if (rr > r_gw + fold)
            lab = kGm;
          else
            lab = kWm;
        }
        if (lab == kWm) {
          for (const Ventricle& ve : vents) {
            const double uu = (x - ve.cx) / ve.ax;
            const double vv = (y - ve.cy) / ve.ay;
            const double ww = (z - ve.cz) / ve.az;
            if (uu * uu + vv * vv + ww * ww <= 1.0) {
              lab = kCsf;
              break;
            }
          }
        }
        labels.at(x, y, z) = lab;
      }

  const double gap = std::min(spec.gm_mean - spec.csf_mean,
                              spec.wm_mean - spec.gm_mean);
  std::normal_distribution<double> noise(0.0, spec.noise_std * gap);

  Volume vol(spec.nx, spec.ny, spec.nz);
  vol.source = "phantom:" + std::to_string(spec.seed);
  for (int z = 0; z < spec.nz; ++z)
    for (int y = 0; y < spec.ny; ++y)
      for (int x = 0; x < spec.nx; ++x) {
        const std::uint8_t lab = labels.at(x, y, z);
        if (lab == kBackground) continue;  // background stays exactly 0
        double mean = spec.csf_mean;
        if (lab == kGm) mean = spec.gm_mean;
        else if (lab == kWm) mean = spec.wm_mean;
        const double bias = spec.bias_amplitude *
                            std::sin(pi * x / nx + ph_b1) *
                            std::sin(pi * y / ny + ph_b2) *
                            std::sin(pi * z / nz + ph_b3);
        double val = mean * (1.0 + bias);
        if (spec.noise_std > 0.0) val += noise(rng);
        vol.at(x, y, z) = std::max(val, 1.0);
      }

  return {std::move(vol), std::move(labels)};
}

// Midpoint-threshold classifier over raw phantom intensities. On a noiseless,
// bias-free phantom it recovers the generating labels exactly; it serves as a
// network-free stand-in when exercising the evaluation pipeline.
inline LabelVolume threshold_oracle(const Volume& vol, const PhantomSpec& spec) {
  const double t_bg = 0.5 * spec.csf_mean;
  const double t_csf = 0.5 * (spec.csf_mean + spec.gm_mean);
  const double t_gm = 0.5 * (spec.gm_mean + spec.wm_mean);
  LabelVolume lv(vol.nx, vol.ny, vol.nz, LabelConvention::model);
  for (std::size_t i = 0; i < vol.v.size(); ++i) {
    const double x = vol.v[i];
    std::uint8_t lab = kBackground;
    if (x >= t_gm) lab = kWm;
    else if (x >= t_csf) lab = kGm;
    else if (x >= t_bg) lab = kCsf;
    lv.v[i] = lab;
  }
  return lv;
}

}  // namespace usegnet
