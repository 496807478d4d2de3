#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "usegnet/common.hpp"
#include "usegnet/tensor.hpp"

namespace testutil {

inline void fill_random(usegnet::Tensor& t, usegnet::Rng& rng, double lo = -1.0,
                        double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
}

inline usegnet::Tensor random_tensor(int n, int c, int h, int w, usegnet::Rng& rng,
                                     double lo = -1.0, double hi = 1.0) {
  usegnet::Tensor t(n, c, h, w);
  fill_random(t, rng, lo, hi);
  return t;
}

// Relative error with a unit floor in the denominator; test losses are scaled
// so the gradients of interest are O(1).
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Probe-weighted sum of a tensor, used to reduce kernel outputs to a scalar
// loss whose gradient with respect to the output is the probe itself.
inline double probe_sum(const usegnet::Tensor& out, const usegnet::Tensor& probe) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * probe.data()[i];
  return s;
}

// Central finite difference of a scalar function of one mutable double.
template <typename F>
double fd_central(double& x, F&& f, double h = 1e-5) {
  const double keep = x;
  x = keep + h;
  const double up = f();
  x = keep - h;
  const double dn = f();
  x = keep;
  return (up - dn) / (2.0 * h);
}

// Unique scratch directory under the test binary's working directory.
inline std::string scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::path("scratch") / tag;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return {};
  std::fseek(f, 0, SEEK_END);
  const long n = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<unsigned char> buf(static_cast<std::size_t>(n));
  if (n > 0 && std::fread(buf.data(), 1, buf.size(), f) != buf.size()) buf.clear();
  std::fclose(f);
  return buf;
}

}  // namespace testutil
