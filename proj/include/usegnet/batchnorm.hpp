#pragma once

#include <vector>

#include "usegnet/tensor.hpp"

namespace usegnet {

enum class Mode { train, infer };

// Per-channel scale/shift with running statistics. gamma and beta are
// learnable (2 * channels parameters); the running mean/variance are
// non-learnable state updated by an exponential moving average in train mode.
struct BatchNormParams {
  int channels = 0;
  std::vector<double> gamma, beta;
  std::vector<double> g_gamma, g_beta;
  std::vector<double> run_mean, run_var;
  double epsilon = 1e-5;
  double momentum_stat = 0.1;
  bool stats_ready = false;

  BatchNormParams() = default;
  explicit BatchNormParams(int ch)
      : channels(ch), gamma(ch, 1.0), beta(ch, 0.0), g_gamma(ch, 0.0),
        g_beta(ch, 0.0), run_mean(ch, 0.0), run_var(ch, 1.0) {}

  std::size_t param_count() const { return gamma.size() + beta.size(); }
  void zero_grads() {
    std::fill(g_gamma.begin(), g_gamma.end(), 0.0);
    std::fill(g_beta.begin(), g_beta.end(), 0.0);
  }
  void set_running_stats(std::vector<double> mean, std::vector<double> var) {
    require(static_cast<int>(mean.size()) == channels &&
                static_cast<int>(var.size()) == channels,
            "batchnorm: running stats size mismatch");
    run_mean = std::move(mean);
    run_var = std::move(var);
    stats_ready = true;
  }
};

// Batch statistics captured by a train-mode forward, needed by backward.
struct BnCache {
  std::vector<double> mean, var;
};

// Train mode normalizes per channel by batch statistics (biased variance over
// batch*h*w) and updates the running stats; infer mode normalizes by the
// running stats.
inline Tensor batchnorm_forward(const Tensor& in, BatchNormParams& p, Mode mode,
                                BnCache* cache = nullptr) {
  require(in.c() == p.channels, "batchnorm: channel mismatch");
  check_finite(in, "batchnorm input");
  const std::size_t m = static_cast<std::size_t>(in.n()) * in.h() * in.w();
  Tensor out(in.shape());

  if (mode == Mode::train) {
    require(m >= 2, "batchnorm: train mode needs at least 2 values per channel");
    std::vector<double> mean(p.channels), var(p.channels);
    for (int c = 0; c < p.channels; ++c) {
      double s = 0.0;
      for (int b = 0; b < in.n(); ++b) {
        const double* ip = in.plane(b, c);
        for (std::size_t t = 0; t < static_cast<std::size_t>(in.h()) * in.w(); ++t)
          s += ip[t];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (int b = 0; b < in.n(); ++b) {
        const double* ip = in.plane(b, c);
        for (std::size_t t = 0; t < static_cast<std::size_t>(in.h()) * in.w(); ++t) {
          const double d = ip[t] - mu;
          v += d * d;
        }
      }
      v /= static_cast<double>(m);
      mean[c] = mu;
      var[c] = v;
      const double scale = p.gamma[c] / std::sqrt(v + p.epsilon);
      const double shift = p.beta[c] - mu * scale;
      for (int b = 0; b < in.n(); ++b) {
        const double* ip = in.plane(b, c);
        double* op = out.plane(b, c);
        for (std::size_t t = 0; t < static_cast<std::size_t>(in.h()) * in.w(); ++t)
          op[t] = ip[t] * scale + shift;
      }
      p.run_mean[c] = (1.0 - p.momentum_stat) * p.run_mean[c] + p.momentum_stat * mu;
      p.run_var[c] = (1.0 - p.momentum_stat) * p.run_var[c] + p.momentum_stat * v;
    }
    p.stats_ready = true;
    if (cache) {
      cache->mean = std::move(mean);
      cache->var = std::move(var);
    }
  } else {
    require(p.stats_ready,
            "batchnorm: infer mode before any training update or explicit "
            "running-stat initialization");
    for (int c = 0; c < p.channels; ++c) {
      const double scale = p.gamma[c] / std::sqrt(p.run_var[c] + p.epsilon);
      const double shift = p.beta[c] - p.run_mean[c] * scale;
      for (int b = 0; b < in.n(); ++b) {
        const double* ip = in.plane(b, c);
        double* op = out.plane(b, c);
        for (std::size_t t = 0; t < static_cast<std::size_t>(in.h()) * in.w(); ++t)
          op[t] = ip[t] * scale + shift;
      }
    }
  }
  return out;
}

// Backward of the train-mode normalization. Accumulates g_gamma / g_beta and
// returns the input gradient.
inline Tensor batchnorm_backward(const Tensor& in, BatchNormParams& p,
                                 const BnCache& cache, const Tensor& grad_out) {
  require(grad_out.shape() == in.shape(), "batchnorm_backward: shape mismatch");
  require(static_cast<int>(cache.mean.size()) == p.channels,
          "batchnorm_backward: missing forward cache");
  const std::size_t plane = static_cast<std::size_t>(in.h()) * in.w();
  const double m = static_cast<double>(static_cast<std::size_t>(in.n()) * plane);
  Tensor grad_in(in.shape());

  for (int c = 0; c < p.channels; ++c) {
    const double mu = cache.mean[c];
    const double inv_std = 1.0 / std::sqrt(cache.var[c] + p.epsilon);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < in.n(); ++b) {
      const double* ip = in.plane(b, c);
      const double* gp = grad_out.plane(b, c);
      for (std::size_t t = 0; t < plane; ++t) {
        sum_dy += gp[t];
        sum_dy_xhat += gp[t] * (ip[t] - mu) * inv_std;
      }
    }
    p.g_beta[c] += sum_dy;
    p.g_gamma[c] += sum_dy_xhat;
    const double k1 = p.gamma[c] * inv_std;
    const double mean_dy = sum_dy / m;
    const double mean_dy_xhat = sum_dy_xhat / m;
    for (int b = 0; b < in.n(); ++b) {
      const double* ip = in.plane(b, c);
      const double* gp = grad_out.plane(b, c);
      double* op = grad_in.plane(b, c);
      for (std::size_t t = 0; t < plane; ++t) {
        const double xhat = (ip[t] - mu) * inv_std;
        op[t] = k1 * (gp[t] - mean_dy - xhat * mean_dy_xhat);
      }
    }
  }
  return grad_in;
}

}  // namespace usegnet
