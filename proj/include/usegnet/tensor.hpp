#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usegnet/common.hpp"

namespace usegnet {

struct Shape4 {
  int n = 0;  // batch
  int c = 0;  // channels
  int h = 0;  // height (rows)
  int w = 0;  // width (columns)

  bool operator==(const Shape4&) const = default;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense 4-D array in row-major (batch, channel, row, column) order,
// double precision throughout.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w) : shape_{n, c, h, w}, v_(shape_.count(), 0.0) {}
  explicit Tensor(Shape4 s) : shape_(s), v_(s.count(), 0.0) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& at(int n, int c, int y, int x) { return v_[offset(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return v_[offset(n, c, y, x)]; }

  // Pointer to the contiguous h*w spatial plane of one (batch, channel) pair.
  double* plane(int n, int c) { return v_.data() + offset(n, c, 0, 0); }
  const double* plane(int n, int c) const { return v_.data() + offset(n, c, 0, 0); }

  void fill(double v) { std::fill(v_.begin(), v_.end(), v); }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool operator==(const Tensor& o) const = default;

 private:
  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape4 shape_{};
  std::vector<double> v_;
};

// Per-pixel integer class labels for a batch of patches.
struct LabelMap {
  int n = 0, h = 0, w = 0;
  std::vector<std::uint8_t> v;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_)
      : n(n_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * h_ * w_, 0) {}

  std::uint8_t& at(int b, int y, int x) {
    return v[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  std::uint8_t at(int b, int y, int x) const {
    return v[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  std::size_t size() const { return v.size(); }
};

// Argmax positions recorded by 2x2 max-pooling. Shapes follow the pooled
// output; each entry is a flat offset into the pre-pool (2h x 2w) spatial
// plane of the same (batch, channel) pair.
struct PoolIndices {
  Shape4 shape{};  // pooled dims
  std::vector<std::int32_t> idx;

  PoolIndices() = default;
  explicit PoolIndices(Shape4 s) : shape(s), idx(s.count(), 0) {}

  std::int32_t& at(int n, int c, int y, int x) {
    return idx[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x];
  }
  std::int32_t at(int n, int c, int y, int x) const {
    return idx[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x];
  }

  bool operator==(const PoolIndices&) const = default;
};

inline void check_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw numeric_error("non-finite values in " + what);
}

}  // namespace usegnet
