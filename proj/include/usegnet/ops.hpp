#pragma once

#include <array>
#include <optional>

#include "usegnet/tensor.hpp"

namespace usegnet {

inline Tensor relu(const Tensor& in) {
  check_finite(in, "relu input");
  Tensor out(in.shape());
  const double* ip = in.data();
  double* op = out.data();
  for (std::size_t t = 0; t < in.size(); ++t) op[t] = ip[t] > 0.0 ? ip[t] : 0.0;
  return out;
}

// Pass-through where the forward input was positive; the subgradient at 0 is 0.
// The forward output carries the same sign pattern, so either tensor works.
inline Tensor relu_backward(const Tensor& in, const Tensor& grad_out) {
  require(in.shape() == grad_out.shape(), "relu_backward: shape mismatch");
  Tensor grad_in(in.shape());
  const double* ip = in.data();
  const double* gp = grad_out.data();
  double* op = grad_in.data();
  for (std::size_t t = 0; t < in.size(); ++t) op[t] = ip[t] > 0.0 ? gp[t] : 0.0;
  return grad_in;
}

// Channel concatenation, a first.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(),
          "concat_channels: spatial mismatch " + a.shape().str() + " vs " +
              b.shape().str());
  Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
  for (int n = 0; n < a.n(); ++n) {
    for (int c = 0; c < a.c(); ++c)
      std::copy(a.plane(n, c), a.plane(n, c) + plane, out.plane(n, c));
    for (int c = 0; c < b.c(); ++c)
      std::copy(b.plane(n, c), b.plane(n, c) + plane, out.plane(n, a.c() + c));
  }
  return out;
}

// Splits the concat gradient back into the two branches.
inline std::pair<Tensor, Tensor> concat_channels_backward(const Tensor& grad_out,
                                                          int a_channels) {
  require(a_channels >= 0 && a_channels <= grad_out.c(),
          "concat_channels_backward: bad split point");
  Tensor ga(grad_out.n(), a_channels, grad_out.h(), grad_out.w());
  Tensor gb(grad_out.n(), grad_out.c() - a_channels, grad_out.h(), grad_out.w());
  const std::size_t plane = static_cast<std::size_t>(grad_out.h()) * grad_out.w();
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < a_channels; ++c)
      std::copy(grad_out.plane(n, c), grad_out.plane(n, c) + plane, ga.plane(n, c));
    for (int c = a_channels; c < grad_out.c(); ++c)
      std::copy(grad_out.plane(n, c), grad_out.plane(n, c) + plane,
                gb.plane(n, c - a_channels));
  }
  return {std::move(ga), std::move(gb)};
}

// Per-pixel softmax over channels, stabilized by max subtraction.
inline Tensor softmax_channels(const Tensor& logits) {
  check_finite(logits, "softmax input");
  Tensor probs(logits.shape());
  const int C = logits.c();
  const std::size_t plane = static_cast<std::size_t>(logits.h()) * logits.w();
  std::vector<double> e(C);
  for (int n = 0; n < logits.n(); ++n)
    for (std::size_t t = 0; t < plane; ++t) {
      double m = logits.plane(n, 0)[t];
      for (int c = 1; c < C; ++c) m = std::max(m, logits.plane(n, c)[t]);
      double z = 0.0;
      for (int c = 0; c < C; ++c) {
        e[c] = std::exp(logits.plane(n, c)[t] - m);
        z += e[c];
      }
      for (int c = 0; c < C; ++c) probs.plane(n, c)[t] = e[c] / z;
    }
  return probs;
}

struct SoftmaxCeResult {
  double loss = 0.0;
  Tensor probabilities;
  Tensor grad_logits;
};

// 4-way softmax cross-entropy over pixels. With class weights the loss is the
// weighted mean of per-pixel negative log-likelihoods (normalizer = sum of the
// weights of the true labels), which reduces to the plain pixel mean when all
// weights are 1.
inline SoftmaxCeResult softmax_ce(const Tensor& logits, const LabelMap& labels,
                                  const std::optional<std::array<double, 4>>&
                                      class_weights = std::nullopt) {
  require(logits.c() == 4, "softmax_ce: expected 4 logit channels");
  require(labels.n == logits.n() && labels.h == logits.h() && labels.w == logits.w(),
          "softmax_ce: label shape mismatch");
  for (std::uint8_t l : labels.v)
    require(l <= 3, "softmax_ce: label " + std::to_string(l) + " outside {0..3}");

  const std::array<double, 4> wts =
      class_weights.value_or(std::array<double, 4>{1.0, 1.0, 1.0, 1.0});

  SoftmaxCeResult r;
  r.probabilities = softmax_channels(logits);
  r.grad_logits = Tensor(logits.shape());
  const std::size_t plane = static_cast<std::size_t>(logits.h()) * logits.w();

  double loss_sum = 0.0, weight_sum = 0.0;
  for (int n = 0; n < logits.n(); ++n)
    for (std::size_t t = 0; t < plane; ++t) {
      const int y = labels.v[static_cast<std::size_t>(n) * plane + t];
      const double wt = wts[y];
      // log p computed from the stabilized logits rather than log(p) to keep
      // saturated-correct losses exact.
      double m = logits.plane(n, 0)[t];
      for (int c = 1; c < 4; ++c) m = std::max(m, logits.plane(n, c)[t]);
      double z = 0.0;
      for (int c = 0; c < 4; ++c) z += std::exp(logits.plane(n, c)[t] - m);
      loss_sum += wt * (std::log(z) - (logits.plane(n, y)[t] - m));
      weight_sum += wt;
    }
  const double norm = weight_sum > 0.0 ? weight_sum : 1.0;
  r.loss = loss_sum / norm;

  for (int n = 0; n < logits.n(); ++n)
    for (std::size_t t = 0; t < plane; ++t) {
      const int y = labels.v[static_cast<std::size_t>(n) * plane + t];
      const double wt = wts[y] / norm;
      for (int c = 0; c < 4; ++c)
        r.grad_logits.plane(n, c)[t] =
            wt * (r.probabilities.plane(n, c)[t] - (c == y ? 1.0 : 0.0));
    }
  return r;
}

}  // namespace usegnet
