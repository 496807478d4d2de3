#pragma once

#include <algorithm>
#include <vector>

#include <cblas.h>

#include "usegnet/tensor.hpp"

namespace usegnet {

// Weights (out_channels, in_channels, kh, kw) plus bias, with matching
// gradient buffers. 3x3 and 1x1 kernels are used by the plain convolutions,
// 2x2 by the stride-2 transposed convolution.
struct ConvParams {
  int out_ch = 0, in_ch = 0, kh = 0, kw = 0;
  std::vector<double> w, b;
  std::vector<double> gw, gb;

  ConvParams() = default;
  ConvParams(int out, int in, int k)
      : out_ch(out), in_ch(in), kh(k), kw(k),
        w(static_cast<std::size_t>(out) * in * k * k, 0.0), b(out, 0.0),
        gw(w.size(), 0.0), gb(out, 0.0) {}

  std::size_t param_count() const { return w.size() + b.size(); }
  void zero_grads() {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
  }

  double& wt(int o, int i, int ky, int kx) {
    return w[((static_cast<std::size_t>(o) * in_ch + i) * kh + ky) * kw + kx];
  }
  double wt(int o, int i, int ky, int kx) const {
    return w[((static_cast<std::size_t>(o) * in_ch + i) * kh + ky) * kw + kx];
  }
  double& wt_grad(int o, int i, int ky, int kx) {
    return gw[((static_cast<std::size_t>(o) * in_ch + i) * kh + ky) * kw + kx];
  }
};

namespace detail {

// Lowers one padded sample to the patch matrix: row (ci*k*k + ky*k + kx),
// column (y*w + x) holds padded_in[ci][y+ky][x+kx]. Border entries come from
// the zero padding and sit at the same positions for every sample, so a
// right-sized buffer from a previous call is reused without re-clearing.
inline void im2col(const Tensor& in, int b, int pad, int k,
                   std::vector<double>& cols) {
  const int c = in.c(), h = in.h(), w = in.w();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t need = static_cast<std::size_t>(c) * k * k * hw;
  if (cols.size() != need) cols.assign(need, 0.0);
  for (int ci = 0; ci < c; ++ci) {
    const double* src = in.plane(b, ci);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* dst = cols.data() +
                      (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(w, w + pad - kx);
          const double* sr = src + static_cast<std::size_t>(sy) * w + kx - pad;
          double* dr = dst + static_cast<std::size_t>(y) * w;
          for (int x = x0; x < x1; ++x) dr[x] = sr[x];
        }
      }
  }
}

// Scatter-adds the patch-matrix gradient back onto the input grid.
inline void col2im_add(const std::vector<double>& cols, int pad, int k,
                       Tensor& grad_in, int b) {
  const int c = grad_in.c(), h = grad_in.h(), w = grad_in.w();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    double* dst = grad_in.plane(b, ci);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* src = cols.data() +
                            (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(w, w + pad - kx);
          double* dr = dst + static_cast<std::size_t>(sy) * w + kx - pad;
          const double* sr = src + static_cast<std::size_t>(y) * w;
          for (int x = x0; x < x1; ++x) dr[x] += sr[x];
        }
      }
  }
}

}  // namespace detail

// Same-size 2-D convolution: padding 1 for 3x3 kernels, 0 for 1x1. The
// spatial lowering is an explicit patch matrix; the inner product runs on
// BLAS. Validated against a nested-loop reference in the test suite.
inline Tensor conv2d_forward(const Tensor& in, const ConvParams& p, int padding) {
  require(p.kh == p.kw && (p.kh == 1 || p.kh == 3),
          "conv2d: kernel must be 1x1 or 3x3");
  require(padding == p.kh / 2, "conv2d: padding must preserve spatial size");
  require(in.c() == p.in_ch, "conv2d: input channels " + std::to_string(in.c()) +
                                 " do not match weights " + std::to_string(p.in_ch));
  require(in.n() > 0 && in.h() > 0 && in.w() > 0, "conv2d: empty input");
  check_finite(in, "conv2d input");

  const int k = p.kh;
  const int hw = in.h() * in.w();
  const int kdim = p.in_ch * k * k;
  Tensor out(in.n(), p.out_ch, in.h(), in.w());
  std::vector<double> cols;
  for (int b = 0; b < in.n(); ++b) {
    const double* patm;
    if (k == 1) {
      patm = in.plane(b, 0);
    } else {
      detail::im2col(in, b, padding, k, cols);
      patm = cols.data();
    }
    double* op = out.plane(b, 0);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, p.out_ch, hw, kdim,
                1.0, p.w.data(), kdim, patm, hw, 0.0, op, hw);
    for (int o = 0; o < p.out_ch; ++o) {
      const double bias = p.b[o];
      double* row = op + static_cast<std::size_t>(o) * hw;
      for (int t = 0; t < hw; ++t) row[t] += bias;
    }
  }
  return out;
}

// Analytic gradients of conv2d_forward. Accumulates into p.gw / p.gb and
// returns the gradient with respect to the input.
inline Tensor conv2d_backward(const Tensor& in, ConvParams& p,
                              const Tensor& grad_out, int padding) {
  require(grad_out.n() == in.n() && grad_out.c() == p.out_ch &&
              grad_out.h() == in.h() && grad_out.w() == in.w(),
          "conv2d_backward: grad shape " + grad_out.shape().str() +
              " inconsistent with forward");
  require(in.c() == p.in_ch, "conv2d_backward: input channel mismatch");
  check_finite(grad_out, "conv2d_backward grad");

  const int k = p.kh;
  const int hw = in.h() * in.w();
  const int kdim = p.in_ch * k * k;
  Tensor grad_in(in.shape());
  std::vector<double> cols, gcols;
  for (int b = 0; b < in.n(); ++b) {
    const double* go = grad_out.plane(b, 0);

    for (int o = 0; o < p.out_ch; ++o) {
      const double* row = go + static_cast<std::size_t>(o) * hw;
      double s = 0.0;
      for (int t = 0; t < hw; ++t) s += row[t];
      p.gb[o] += s;
    }

    // grad_weights += grad_out . cols^T
    const double* patm;
    if (k == 1) {
      patm = in.plane(b, 0);
    } else {
      detail::im2col(in, b, padding, k, cols);
      patm = cols.data();
    }
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, p.out_ch, kdim, hw,
                1.0, go, hw, patm, hw, 1.0, p.gw.data(), kdim);

    // grad_input = fold(W^T . grad_out)
    if (k == 1) {
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, hw, p.out_ch,
                  1.0, p.w.data(), kdim, go, hw, 0.0, grad_in.plane(b, 0), hw);
    } else {
      gcols.resize(static_cast<std::size_t>(kdim) * hw);
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, hw, p.out_ch,
                  1.0, p.w.data(), kdim, go, hw, 0.0, gcols.data(), hw);
      detail::col2im_add(gcols, padding, k, grad_in, b);
    }
  }
  return grad_in;
}

// Learnable 2x2 stride-2 upsampling (transposed convolution). Windows do not
// overlap, so each output pixel receives exactly one kernel tap.
inline Tensor conv_transpose2x2_forward(const Tensor& in, const ConvParams& p) {
  require(p.kh == 2 && p.kw == 2, "conv_transpose2x2: kernel must be 2x2");
  require(in.c() == p.in_ch, "conv_transpose2x2: input channel mismatch");
  check_finite(in, "conv_transpose2x2 input");

  const int h = in.h(), w = in.w();
  Tensor out(in.n(), p.out_ch, 2 * h, 2 * w);
  for (int b = 0; b < in.n(); ++b)
    for (int o = 0; o < p.out_ch; ++o) {
      double* op = out.plane(b, o);
      const double bias = p.b[o];
      for (std::size_t t = 0; t < static_cast<std::size_t>(4) * h * w; ++t) op[t] = bias;
      for (int i = 0; i < p.in_ch; ++i) {
        const double* ip = in.plane(b, i);
        const double w00 = p.wt(o, i, 0, 0), w01 = p.wt(o, i, 0, 1);
        const double w10 = p.wt(o, i, 1, 0), w11 = p.wt(o, i, 1, 1);
        for (int y = 0; y < h; ++y) {
          const double* ir = ip + static_cast<std::size_t>(y) * w;
          double* r0 = op + static_cast<std::size_t>(2 * y) * 2 * w;
          double* r1 = r0 + 2 * w;
          for (int x = 0; x < w; ++x) {
            const double v = ir[x];
            r0[2 * x] += w00 * v;
            r0[2 * x + 1] += w01 * v;
            r1[2 * x] += w10 * v;
            r1[2 * x + 1] += w11 * v;
          }
        }
      }
    }
  return out;
}

inline Tensor conv_transpose2x2_backward(const Tensor& in, ConvParams& p,
                                         const Tensor& grad_out) {
  require(grad_out.n() == in.n() && grad_out.c() == p.out_ch &&
              grad_out.h() == 2 * in.h() && grad_out.w() == 2 * in.w(),
          "conv_transpose2x2_backward: grad shape inconsistent with forward");
  check_finite(grad_out, "conv_transpose2x2_backward grad");

  const int h = in.h(), w = in.w();
  Tensor grad_in(in.n(), p.in_ch, h, w);
  for (int b = 0; b < in.n(); ++b)
    for (int o = 0; o < p.out_ch; ++o) {
      const double* gp = grad_out.plane(b, o);
      double gb = 0.0;
      for (std::size_t t = 0; t < static_cast<std::size_t>(4) * h * w; ++t) gb += gp[t];
      p.gb[o] += gb;
      for (int i = 0; i < p.in_ch; ++i) {
        const double* ip = in.plane(b, i);
        double* gi = grad_in.plane(b, i);
        double gw00 = 0, gw01 = 0, gw10 = 0, gw11 = 0;
        const double w00 = p.wt(o, i, 0, 0), w01 = p.wt(o, i, 0, 1);
        const double w10 = p.wt(o, i, 1, 0), w11 = p.wt(o, i, 1, 1);
        for (int y = 0; y < h; ++y) {
          const double* ir = ip + static_cast<std::size_t>(y) * w;
          double* gir = gi + static_cast<std::size_t>(y) * w;
          const double* g0 = gp + static_cast<std::size_t>(2 * y) * 2 * w;
          const double* g1 = g0 + 2 * w;
          for (int x = 0; x < w; ++x) {
            const double v = ir[x];
            const double a = g0[2 * x], bb = g0[2 * x + 1];
            const double c = g1[2 * x], d = g1[2 * x + 1];
            gw00 += a * v;
            gw01 += bb * v;
            gw10 += c * v;
            gw11 += d * v;
            gir[x] += w00 * a + w01 * bb + w10 * c + w11 * d;
          }
        }
        p.wt_grad(o, i, 0, 0) += gw00;
        p.wt_grad(o, i, 0, 1) += gw01;
        p.wt_grad(o, i, 1, 0) += gw10;
        p.wt_grad(o, i, 1, 1) += gw11;
      }
    }
  return grad_in;
}

}  // namespace usegnet
