#pragma once

#include <utility>

#include "usegnet/tensor.hpp"

namespace usegnet {

// 2x2 max-pooling. Records the argmax of every window as a flat offset into
// the pre-pool spatial plane; ties break to the first occurrence in row-major
// window order.
inline std::pair<Tensor, PoolIndices> maxpool2x2_forward(const Tensor& in) {
  require(in.h() % 2 == 0 && in.w() % 2 == 0,
          "maxpool2x2: spatial dims must be even, got " + in.shape().str());
  check_finite(in, "maxpool2x2 input");

  const int h = in.h() / 2, w = in.w() / 2, wi = in.w();
  Tensor out(in.n(), in.c(), h, w);
  PoolIndices indices(out.shape());
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c) {
      const double* ip = in.plane(b, c);
      double* op = out.plane(b, c);
      std::int32_t* xp = indices.idx.data() +
                         (static_cast<std::size_t>(b) * in.c() + c) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int base = 2 * y * wi + 2 * x;
          int best = base;
          double bv = ip[base];
          if (ip[base + 1] > bv) { bv = ip[base + 1]; best = base + 1; }
          if (ip[base + wi] > bv) { bv = ip[base + wi]; best = base + wi; }
          if (ip[base + wi + 1] > bv) { bv = ip[base + wi + 1]; best = base + wi + 1; }
          op[y * w + x] = bv;
          xp[y * w + x] = best;
        }
    }
  return {std::move(out), std::move(indices)};
}

// Routes the gradient to the recorded argmax of each window; everything else
// stays zero.
inline Tensor maxpool2x2_backward(const Tensor& grad_out, const PoolIndices& indices) {
  require(grad_out.shape() == indices.shape,
          "maxpool2x2_backward: grad shape does not match indices");
  const int h = grad_out.h(), w = grad_out.w();
  const int hi = 2 * h, wi = 2 * w;
  Tensor grad_in(grad_out.n(), grad_out.c(), hi, wi);
  for (int b = 0; b < grad_out.n(); ++b)
    for (int c = 0; c < grad_out.c(); ++c) {
      const double* gp = grad_out.plane(b, c);
      double* ip = grad_in.plane(b, c);
      const std::int32_t* xp = indices.idx.data() +
                               (static_cast<std::size_t>(b) * grad_out.c() + c) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::int32_t t = xp[y * w + x];
          const int dy = t / wi - 2 * y, dx = t % wi - 2 * x;
          require(dy >= 0 && dy < 2 && dx >= 0 && dx < 2,
                  "maxpool2x2_backward: index outside its source window");
          ip[t] += gp[y * w + x];
        }
    }
  return grad_in;
}

// Sparse upsampling: places each value at its recorded argmax position in a
// doubled spatial plane, zeros elsewhere.
inline Tensor unpool2x2(const Tensor& in, const PoolIndices& indices) {
  require(in.shape() == indices.shape,
          "unpool2x2: input " + in.shape().str() + " does not match indices " +
              indices.shape.str());
  check_finite(in, "unpool2x2 input");

  const int h = in.h(), w = in.w(), wi = 2 * w;
  Tensor out(in.n(), in.c(), 2 * h, 2 * w);
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c) {
      const double* ip = in.plane(b, c);
      double* op = out.plane(b, c);
      const std::int32_t* xp = indices.idx.data() +
                               (static_cast<std::size_t>(b) * in.c() + c) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::int32_t t = xp[y * w + x];
          const int dy = t / wi - 2 * y, dx = t % wi - 2 * x;
          require(dy >= 0 && dy < 2 && dx >= 0 && dx < 2,
                  "unpool2x2: index outside its source window");
          op[t] = ip[y * w + x];
        }
    }
  return out;
}

// Backward of unpool2x2: gathers the gradient from the scatter positions.
inline Tensor unpool2x2_backward(const Tensor& grad_out, const PoolIndices& indices) {
  const int h = indices.shape.h, w = indices.shape.w, wi = 2 * w;
  require(grad_out.n() == indices.shape.n && grad_out.c() == indices.shape.c &&
              grad_out.h() == 2 * h && grad_out.w() == 2 * w,
          "unpool2x2_backward: grad shape does not match indices");
  Tensor grad_in(indices.shape);
  for (int b = 0; b < grad_out.n(); ++b)
    for (int c = 0; c < grad_out.c(); ++c) {
      const double* gp = grad_out.plane(b, c);
      double* ip = grad_in.plane(b, c);
      const std::int32_t* xp = indices.idx.data() +
                               (static_cast<std::size_t>(b) * grad_out.c() + c) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) ip[y * w + x] = gp[xp[y * w + x]];
    }
  return grad_in;
}

}  // namespace usegnet
