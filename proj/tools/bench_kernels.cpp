// Rough throughput check for the convolution kernels at network-typical sizes.
#include <chrono>
#include <cstdio>
#include <random>

#include "usegnet/conv.hpp"

using namespace usegnet;

static Tensor random_tensor(int n, int c, int h, int w, Rng& rng) {
  Tensor t(n, c, h, w);
  std::normal_distribution<double> d(0.0, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
  return t;
}

static void bench(const char* name, int batch, int cin, int cout, int hw, int reps) {
  Rng rng(42);
  Tensor in = random_tensor(batch, cin, hw, hw, rng);
  ConvParams p(cout, cin, 3);
  std::normal_distribution<double> d(0.0, 0.05);
  for (auto& v : p.w) v = d(rng);

  Tensor out = conv2d_forward(in, p, 1);  // warm-up
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) out = conv2d_forward(in, p, 1);
  auto t1 = std::chrono::steady_clock::now();
  double fwd_s = std::chrono::duration<double>(t1 - t0).count() / reps;

  Tensor gout = random_tensor(batch, cout, hw, hw, rng);
  Tensor gin = conv2d_backward(in, p, gout, 1);
  t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) gin = conv2d_backward(in, p, gout, 1);
  t1 = std::chrono::steady_clock::now();
  double bwd_s = std::chrono::duration<double>(t1 - t0).count() / reps;

  double flop = 2.0 * batch * cout * cin * 9.0 * hw * hw;
  std::printf("%-28s fwd %7.2f ms (%6.2f GF/s)   bwd %7.2f ms (%6.2f GF/s)\n",
              name, fwd_s * 1e3, flop / fwd_s * 1e-9, bwd_s * 1e3,
              2.0 * flop / bwd_s * 1e-9);
}

int main() {
  bench("b16 conv64->64 @40", 16, 64, 64, 40, 5);
  bench("b16 conv128->128 @20", 16, 128, 128, 20, 5);
  bench("b16 conv256->256 @10", 16, 256, 256, 10, 5);
  bench("b16 conv3->64 @40", 16, 3, 64, 40, 5);
  return 0;
}
