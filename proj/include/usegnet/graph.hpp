#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "usegnet/batchnorm.hpp"
#include "usegnet/common.hpp"
#include "usegnet/conv.hpp"
#include "usegnet/ops.hpp"
#include "usegnet/pool.hpp"

namespace usegnet {

enum class LayerKind { conv, bn, relu, pool, unpool, concat, tconv };

struct Layer {
  LayerKind kind{};
  std::string id;
  int param = -1;  // conv/tconv: convs index; bn: bns index; pool/unpool: pool ordinal
  int pair = -1;   // unpool: layer index of the matching pool
  int src = -1;    // concat: layer index whose output is appended
  int out_ch = 0;
};

// Everything the backward pass needs from one training forward pass.
struct ForwardCache {
  std::vector<Tensor> out;         // per-layer outputs
  std::vector<PoolIndices> pools;  // per pool ordinal
  std::vector<BnCache> bn;         // per batch-norm parameter set
};

// A straight-line layer list with two non-local edge types: unpool layers
// reuse the argmax indices of their LIFO-matched pool, and concat layers
// append the output of an earlier (encoder) layer.
class Network {
 public:
  std::string arch;
  int in_channels = 3;
  int num_classes = 4;
  int width_div = 1;
  std::vector<Layer> layers;
  std::vector<ConvParams> convs;
  std::vector<BatchNormParams> bns;
  std::vector<std::string> conv_owner;  // layer id owning convs[i]
  std::vector<std::string> bn_owner;
  int pool_count = 0;

  std::size_t param_count() const {
    std::size_t total = 0;
    for (const auto& c : convs) total += c.param_count();
    for (const auto& b : bns) total += 2 * static_cast<std::size_t>(b.channels);
    return total;
  }

  std::size_t conv_param_count() const {
    std::size_t total = 0;
    for (const auto& c : convs) total += c.param_count();
    return total;
  }

  std::size_t bn_param_count() const { return param_count() - conv_param_count(); }

  // Canonical architecture description; its hash guards checkpoint loading.
  std::string spec_string() const {
    std::string s = "arch=" + arch + ";in=" + std::to_string(in_channels) +
                    ";classes=" + std::to_string(num_classes);
    for (const Layer& ly : layers) {
      s += ';';
      switch (ly.kind) {
        case LayerKind::conv: {
          const ConvParams& c = convs[ly.param];
          s += "conv" + std::to_string(c.kh) + "x" + std::to_string(c.kw) + ":" +
               std::to_string(c.in_ch) + ">" + std::to_string(c.out_ch);
          break;
        }
        case LayerKind::tconv: {
          const ConvParams& c = convs[ly.param];
          s += "tconv2x2:" + std::to_string(c.in_ch) + ">" + std::to_string(c.out_ch);
          break;
        }
        case LayerKind::bn:
          s += "bn:" + std::to_string(bns[ly.param].channels);
          break;
        case LayerKind::relu:
          s += "relu";
          break;
        case LayerKind::pool:
          s += "pool2";
          break;
        case LayerKind::unpool:
          s += "unpool2:" + std::to_string(ly.pair);
          break;
        case LayerKind::concat:
          s += "concat:" + std::to_string(ly.src);
          break;
      }
    }
    return s;
  }

  std::uint64_t fingerprint() const { return fnv1a64(spec_string()); }

  // He-normal weights for every conv, zero biases, identity batch norm.
  // A single generator walks the layers in order, so one seed pins every
  // parameter in the network.
  void init_params(std::uint64_t seed) {
    Rng rng = seeded_rng(seed, 0x1e17);
    for (ConvParams& c : convs) {
      const double fan_in = static_cast<double>(c.in_ch) * c.kh * c.kw;
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (double& v : c.w) v = dist(rng);
      std::fill(c.b.begin(), c.b.end(), 0.0);
    }
    for (BatchNormParams& b : bns) {
      std::fill(b.gamma.begin(), b.gamma.end(), 1.0);
      std::fill(b.beta.begin(), b.beta.end(), 0.0);
      std::fill(b.run_mean.begin(), b.run_mean.end(), 0.0);
      std::fill(b.run_var.begin(), b.run_var.end(), 1.0);
      b.stats_ready = false;
    }
  }

  void zero_grads() {
    for (ConvParams& c : convs) c.zero_grads();
    for (BatchNormParams& b : bns) b.zero_grads();
  }

  // Training forward pass. Keeps every intermediate activation in the cache;
  // batch norm runs on batch statistics and refreshes its running estimates.
  Tensor forward_train(const Tensor& x, ForwardCache& cache) {
    check_input(x);
    cache.out.assign(layers.size(), Tensor{});
    cache.pools.assign(pool_count, PoolIndices{});
    cache.bn.assign(bns.size(), BnCache{});
    const Tensor* cur = &x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      cache.out[i] = apply_layer(layers[i], *cur, Mode::train, cache.pools,
                                 cache.bn.data(), &cache.out);
      cur = &cache.out[i];
    }
    return cache.out.back();
  }

  // Inference forward pass. Batch norm uses running statistics; activations
  // are dropped as soon as no later layer needs them.
  Tensor forward_infer(const Tensor& x) {
    check_input(x);
    std::vector<int> uses(layers.size(), 0);
    for (const Layer& ly : layers)
      if (ly.kind == LayerKind::concat) ++uses[ly.src];

    std::vector<PoolIndices> pools(pool_count);
    std::map<int, Tensor> saved;
    Tensor cur = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Layer& ly = layers[i];
      Tensor out;
      if (ly.kind == LayerKind::concat) {
        auto it = saved.find(ly.src);
        require(it != saved.end(), "graph: concat source not available");
        out = concat_channels(cur, it->second);
        if (--uses[ly.src] == 0) saved.erase(it);
        if (!out.all_finite())
          throw numeric_error("layer " + ly.id + " produced non-finite values");
      } else {
        out = apply_layer(ly, cur, Mode::infer, pools, nullptr, nullptr);
      }
      if (uses[i] > 0) saved[static_cast<int>(i)] = out;
      cur = std::move(out);
    }
    return cur;
  }

  // Backpropagates grad_out (gradient of the loss in the logits) through the
  // whole graph, accumulating parameter gradients, and returns the gradient
  // with respect to the input.
  Tensor backward(const Tensor& x, const ForwardCache& cache, const Tensor& grad_out) {
    require(cache.out.size() == layers.size(),
            "graph: backward needs the cache of a training forward pass");
    std::vector<Tensor> pending(layers.size());
    Tensor g = grad_out;
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
      if (!pending[i].empty()) {
        add_into(g, pending[i]);
        pending[i] = Tensor{};
      }
      const Layer& ly = layers[i];
      const Tensor& lin = (i == 0) ? x : cache.out[i - 1];
      switch (ly.kind) {
        case LayerKind::conv:
          g = conv2d_backward(lin, convs[ly.param], g, convs[ly.param].kh / 2);
          break;
        case LayerKind::tconv:
          g = conv_transpose2x2_backward(lin, convs[ly.param], g);
          break;
        case LayerKind::bn:
          g = batchnorm_backward(lin, bns[ly.param], cache.bn[ly.param], g);
          break;
        case LayerKind::relu:
          g = relu_backward(lin, g);
          break;
        case LayerKind::pool:
          g = maxpool2x2_backward(g, cache.pools[ly.param]);
          break;
        case LayerKind::unpool:
          g = unpool2x2_backward(g, cache.pools[ly.param]);
          break;
        case LayerKind::concat: {
          auto [ga, gb] = concat_channels_backward(g, lin.c());
          if (pending[ly.src].empty())
            pending[ly.src] = std::move(gb);
          else
            add_into(pending[ly.src], gb);
          g = std::move(ga);
          break;
        }
      }
    }
    return g;
  }

 private:
  void check_input(const Tensor& x) const {
    require(x.c() == in_channels, "graph: input has " + std::to_string(x.c()) +
                                      " channels, expected " +
                                      std::to_string(in_channels));
    require(x.n() > 0, "graph: empty batch");
    require(x.h() % 8 == 0 && x.w() % 8 == 0 && x.h() >= 8 && x.w() >= 8,
            "graph: spatial dims must be multiples of 8, got " + x.shape().str());
  }

  static void add_into(Tensor& dst, const Tensor& src) {
    require(dst.shape() == src.shape(), "graph: gradient shape mismatch");
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t t = 0; t < dst.size(); ++t) d[t] += s[t];
  }

  Tensor apply_layer(const Layer& ly, const Tensor& in, Mode mode,
                     std::vector<PoolIndices>& pools, BnCache* bn_caches,
                     const std::vector<Tensor>* outs) {
    Tensor out;
    switch (ly.kind) {
      case LayerKind::conv:
        out = conv2d_forward(in, convs[ly.param], convs[ly.param].kh / 2);
        break;
      case LayerKind::tconv:
        out = conv_transpose2x2_forward(in, convs[ly.param]);
        break;
      case LayerKind::bn:
        out = batchnorm_forward(in, bns[ly.param], mode,
                                bn_caches ? &bn_caches[ly.param] : nullptr);
        break;
      case LayerKind::relu:
        out = usegnet::relu(in);
        break;
      case LayerKind::pool: {
        auto pr = maxpool2x2_forward(in);
        out = std::move(pr.first);
        pools[ly.param] = std::move(pr.second);
        break;
      }
      case LayerKind::unpool:
        out = unpool2x2(in, pools[ly.param]);
        break;
      case LayerKind::concat:
        require(outs != nullptr, "graph: concat needs cached outputs");
        out = concat_channels(in, (*outs)[ly.src]);
        break;
    }
    if (!out.all_finite())
      throw numeric_error("layer " + ly.id + " produced non-finite values");
    return out;
  }
};

namespace detail {

struct GraphBuilder {
  Network net;
  std::vector<int> pool_stack;
  int ch;

  explicit GraphBuilder(std::string arch, int in_channels) {
    net.arch = std::move(arch);
    net.in_channels = in_channels;
    ch = in_channels;
  }

  int add(Layer ly) {
    ly.out_ch = ch;
    net.layers.push_back(std::move(ly));
    return static_cast<int>(net.layers.size()) - 1;
  }

  int conv(int out_ch, int k, const std::string& id) {
    net.convs.emplace_back(out_ch, ch, k);
    net.conv_owner.push_back(id);
    ch = out_ch;
    return add({LayerKind::conv, id, static_cast<int>(net.convs.size()) - 1});
  }

  int tconv(int out_ch, const std::string& id) {
    net.convs.emplace_back(out_ch, ch, 2);
    net.conv_owner.push_back(id);
    ch = out_ch;
    return add({LayerKind::tconv, id, static_cast<int>(net.convs.size()) - 1});
  }

  int bn(const std::string& id) {
    net.bns.emplace_back(ch);
    net.bn_owner.push_back(id);
    return add({LayerKind::bn, id, static_cast<int>(net.bns.size()) - 1});
  }

  int relu(const std::string& id) { return add({LayerKind::relu, id}); }

  // conv 3x3 + batch norm + relu, the standard block of every level.
  int cbr(int out_ch, const std::string& base) {
    conv(out_ch, 3, base);
    bn(base + "_bn");
    return relu(base + "_relu");
  }

  int pool(const std::string& id) {
    const int ord = net.pool_count++;
    const int li = add({LayerKind::pool, id, ord});
    pool_stack.push_back(li);
    return li;
  }

  int unpool(const std::string& id) {
    require(!pool_stack.empty(), "graph: unpool without a matching pool");
    const int pl = pool_stack.back();
    pool_stack.pop_back();
    return add({LayerKind::unpool, id, net.layers[pl].param, pl});
  }

  int concat(int src, const std::string& id) {
    require(src >= 0 && src < static_cast<int>(net.layers.size()),
            "graph: concat source out of range");
    ch += net.layers[src].out_ch;
    return add({LayerKind::concat, id, -1, -1, src});
  }
};

struct EncoderTaps {
  int tap1, tap2, tap3;  // last relu of each level, before its pool
};

inline EncoderTaps build_encoder(GraphBuilder& b, int w1, int w2, int w3) {
  EncoderTaps t{};
  b.cbr(w1, "enc1_conv1");
  t.tap1 = b.cbr(w1, "enc1_conv2");
  b.pool("enc1_pool");
  b.cbr(w2, "enc2_conv1");
  t.tap2 = b.cbr(w2, "enc2_conv2");
  b.pool("enc2_pool");
  b.cbr(w3, "enc3_conv1");
  b.cbr(w3, "enc3_conv2");
  t.tap3 = b.cbr(w3, "enc3_conv3");
  b.pool("enc3_pool");
  return t;
}

inline void check_widths(int width_div) {
  require(width_div >= 1 && 64 % width_div == 0,
          "network: width divisor must divide 64");
}

}  // namespace detail

// Encoder-decoder with index-preserving unpooling and no skip connections.
inline Network build_segnet(int width_div = 1) {
  detail::check_widths(width_div);
  const int w1 = 64 / width_div, w2 = 128 / width_div, w3 = 256 / width_div;
  detail::GraphBuilder b("segnet", 3);
  detail::build_encoder(b, w1, w2, w3);
  b.unpool("dec3_unpool");
  b.cbr(w3, "dec3_conv1");
  b.cbr(w3, "dec3_conv2");
  b.cbr(w2, "dec3_conv3");
  b.unpool("dec2_unpool");
  b.cbr(w2, "dec2_conv1");
  b.cbr(w1, "dec2_conv2");
  b.unpool("dec1_unpool");
  b.cbr(w1, "dec1_conv1");
  b.conv(4, 3, "dec1_conv2");
  b.net.width_div = width_div;
  return std::move(b.net);
}

// Same trunk with one skip: the full-resolution encoder features are
// concatenated after the last unpooling and fused by a 1x1 conv + relu.
inline Network build_usegnet(int width_div = 1) {
  detail::check_widths(width_div);
  const int w1 = 64 / width_div, w2 = 128 / width_div, w3 = 256 / width_div;
  detail::GraphBuilder b("usegnet", 3);
  const auto taps = detail::build_encoder(b, w1, w2, w3);
  b.unpool("dec3_unpool");
  b.cbr(w3, "dec3_conv1");
  b.cbr(w3, "dec3_conv2");
  b.cbr(w2, "dec3_conv3");
  b.unpool("dec2_unpool");
  b.cbr(w2, "dec2_conv1");
  b.cbr(w1, "dec2_conv2");
  b.unpool("dec1_unpool");
  b.concat(taps.tap1, "skip1_concat");
  b.conv(w1, 1, "skip1_conv");
  b.relu("skip1_relu");
  b.cbr(w1, "dec1_conv1");
  b.conv(4, 3, "dec1_conv2");
  b.net.width_div = width_div;
  return std::move(b.net);
}

// Two skips: the half-resolution merge mirrors the full-resolution one.
inline Network build_usegnet2(int width_div = 1) {
  detail::check_widths(width_div);
  const int w1 = 64 / width_div, w2 = 128 / width_div, w3 = 256 / width_div;
  detail::GraphBuilder b("usegnet2", 3);
  const auto taps = detail::build_encoder(b, w1, w2, w3);
  b.unpool("dec3_unpool");
  b.cbr(w3, "dec3_conv1");
  b.cbr(w3, "dec3_conv2");
  b.cbr(w2, "dec3_conv3");
  b.unpool("dec2_unpool");
  b.concat(taps.tap2, "skip2_concat");
  b.conv(w2, 1, "skip2_conv");
  b.relu("skip2_relu");
  b.cbr(w2, "dec2_conv1");
  b.cbr(w1, "dec2_conv2");
  b.unpool("dec1_unpool");
  b.concat(taps.tap1, "skip1_concat");
  b.conv(w1, 1, "skip1_conv");
  b.relu("skip1_relu");
  b.cbr(w1, "dec1_conv1");
  b.conv(4, 3, "dec1_conv2");
  b.net.width_div = width_div;
  return std::move(b.net);
}

// Skip-heavy baseline: learnable 2x2 upsampling, concatenation at every
// level, and a 3x3 fusion conv per merge.
inline Network build_unet(int width_div = 1) {
  detail::check_widths(width_div);
  const int w1 = 64 / width_div, w2 = 128 / width_div, w3 = 256 / width_div;
  detail::GraphBuilder b("unet", 3);
  const auto taps = detail::build_encoder(b, w1, w2, w3);
  b.tconv(w3, "up3_tconv");
  b.concat(taps.tap3, "up3_concat");
  b.cbr(w3, "up3_conv");
  b.tconv(w2, "up2_tconv");
  b.concat(taps.tap2, "up2_concat");
  b.cbr(w2, "up2_conv");
  b.tconv(w1, "up1_tconv");
  b.concat(taps.tap1, "up1_concat");
  b.cbr(w1, "up1_conv");
  b.conv(4, 3, "out_conv");
  b.net.width_div = width_div;
  return std::move(b.net);
}

inline Network build_network(const std::string& arch, int width_div = 1) {
  if (arch == "segnet") return build_segnet(width_div);
  if (arch == "usegnet") return build_usegnet(width_div);
  if (arch == "usegnet2") return build_usegnet2(width_div);
  if (arch == "unet") return build_unet(width_div);
  throw data_error("unknown architecture '" + arch +
                   "' (expected segnet, usegnet, usegnet2 or unet)");
}

}  // namespace usegnet
