#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "usegnet/graph.hpp"

namespace usegnet {

struct OptimConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double l2 = 1e-4;
  int batch_size = 64;
  int max_epochs = 700;
  std::uint64_t seed = 0;
  std::set<std::string> frozen;  // ids of layers whose parameters stay fixed

  void validate() const {
    require(learning_rate >= 0.0, "optim: learning rate must be >= 0");
    require(momentum >= 0.0 && momentum < 1.0, "optim: momentum must lie in [0,1)");
    require(l2 >= 0.0, "optim: l2 must be >= 0");
    require(batch_size >= 1, "optim: batch size must be >= 1");
    require(max_epochs >= 0, "optim: max epochs must be >= 0");
  }
};

// Momentum buffers shaped like the parameters they update.
struct TrainState {
  std::vector<std::vector<double>> vel_w, vel_b;        // per conv
  std::vector<std::vector<double>> vel_gamma, vel_beta; // per batch norm
  int epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
};

inline TrainState init_train_state(const Network& net) {
  TrainState st;
  for (const ConvParams& c : net.convs) {
    st.vel_w.emplace_back(c.w.size(), 0.0);
    st.vel_b.emplace_back(c.b.size(), 0.0);
  }
  for (const BatchNormParams& b : net.bns) {
    st.vel_gamma.emplace_back(b.gamma.size(), 0.0);
    st.vel_beta.emplace_back(b.beta.size(), 0.0);
  }
  return st;
}

// All ids that may appear in a freeze mask: one per parameterized layer.
inline std::set<std::string> param_layer_ids(const Network& net) {
  std::set<std::string> ids;
  for (const std::string& s : net.conv_owner) ids.insert(s);
  for (const std::string& s : net.bn_owner) ids.insert(s);
  return ids;
}

namespace detail {

inline void momentum_update(std::vector<double>& w, const std::vector<double>& g,
                            std::vector<double>& v, const OptimConfig& cfg) {
  require(w.size() == g.size() && w.size() == v.size(),
          "sgd: parameter/gradient/velocity sizes differ");
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double reg = g[i] + cfg.l2 * w[i];
    v[i] = cfg.momentum * v[i] - cfg.learning_rate * reg;
    w[i] += v[i];
  }
}

}  // namespace detail

// One momentum-SGD step from the accumulated gradients. Frozen layers keep
// both their parameters and their velocity; batch-norm running statistics are
// never touched here.
inline void sgd_step(Network& net, TrainState& st, const OptimConfig& cfg) {
  cfg.validate();
  require(st.vel_w.size() == net.convs.size() &&
              st.vel_gamma.size() == net.bns.size(),
          "sgd: state does not match the network");
  for (std::size_t i = 0; i < net.convs.size(); ++i) {
    if (cfg.frozen.count(net.conv_owner[i])) continue;
    detail::momentum_update(net.convs[i].w, net.convs[i].gw, st.vel_w[i], cfg);
    detail::momentum_update(net.convs[i].b, net.convs[i].gb, st.vel_b[i], cfg);
  }
  for (std::size_t i = 0; i < net.bns.size(); ++i) {
    if (cfg.frozen.count(net.bn_owner[i])) continue;
    detail::momentum_update(net.bns[i].gamma, net.bns[i].g_gamma, st.vel_gamma[i], cfg);
    detail::momentum_update(net.bns[i].beta, net.bns[i].g_beta, st.vel_beta[i], cfg);
  }
}

// Freeze mask that unfreezes exactly the listed layers; every id must name a
// parameterized layer of the network.
inline OptimConfig apply_freeze_schedule(const Network& net, OptimConfig cfg,
                                         const std::vector<std::string>& unfreeze) {
  const std::set<std::string> all = param_layer_ids(net);
  for (const std::string& id : unfreeze)
    require(all.count(id) > 0, "freeze schedule: unknown layer id '" + id + "'");
  cfg.frozen.clear();
  for (const std::string& id : all)
    if (std::find(unfreeze.begin(), unfreeze.end(), id) == unfreeze.end())
      cfg.frozen.insert(id);
  return cfg;
}

}  // namespace usegnet
