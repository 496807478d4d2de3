#pragma once

#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "usegnet/checkpoint.hpp"
#include "usegnet/optim.hpp"
#include "usegnet/patches.hpp"

namespace usegnet {

namespace detail {

inline std::string param_norm_diagnostics(const Network& net) {
  std::string s;
  for (std::size_t i = 0; i < net.convs.size(); ++i) {
    double ss = 0.0;
    for (double w : net.convs[i].w) ss += w * w;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s |w|=%.4g", net.conv_owner[i].c_str(),
                  std::sqrt(ss));
    s += (i ? "; " : "") + std::string(buf);
  }
  return s;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n,
                                                 std::uint64_t seed, int epoch) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = seeded_rng(seed, 0xe60c + static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i)
    std::swap(ids[i - 1], ids[rng() % i]);
  return ids;
}

}  // namespace detail

// Mean cross-entropy of a dataset under inference-mode forward passes; no
// parameter or running-statistic updates.
inline double dataset_loss(Network& net, const Dataset& ds, int batch_size) {
  require(ds.size() > 0, "loss: empty dataset");
  require(batch_size >= 1, "loss: batch size must be >= 1");
  double total = 0.0;
  std::size_t done = 0;
  while (done < ds.size()) {
    const std::size_t take = std::min<std::size_t>(batch_size, ds.size() - done);
    std::vector<std::size_t> ids(take);
    std::iota(ids.begin(), ids.end(), done);
    auto [input, labels] = assemble_batch(ds, ids);
    const Tensor logits = net.forward_infer(input);
    total += softmax_ce(logits, labels).loss * static_cast<double>(take);
    done += take;
  }
  return total / static_cast<double>(ds.size());
}

// One pass over the shuffled dataset: forward, cross-entropy, backward, SGD
// step per batch (the final short batch included). Returns the patch-weighted
// mean training loss and advances state.epoch.
inline double train_epoch(Network& net, const Dataset& ds, TrainState& st,
                          const OptimConfig& cfg) {
  cfg.validate();
  require(ds.size() > 0, "train: empty dataset");
  const std::vector<std::size_t> order =
      detail::shuffled_indices(ds.size(), cfg.seed, st.epoch);
  double total = 0.0;
  std::size_t done = 0;
  int batch_no = 0;
  while (done < order.size()) {
    const std::size_t take =
        std::min<std::size_t>(cfg.batch_size, order.size() - done);
    const std::vector<std::size_t> ids(order.begin() + done,
                                       order.begin() + done + take);
    auto [input, labels] = assemble_batch(ds, ids);
    ForwardCache cache;
    const Tensor logits = net.forward_train(input, cache);
    SoftmaxCeResult ce = softmax_ce(logits, labels);
    if (!std::isfinite(ce.loss))
      throw numeric_error("training diverged: non-finite loss at epoch " +
                          std::to_string(st.epoch + 1) + ", batch " +
                          std::to_string(batch_no) + "; " +
                          detail::param_norm_diagnostics(net));
    net.zero_grads();
    net.backward(input, cache, ce.grad_logits);
    sgd_step(net, st, cfg);
    total += ce.loss * static_cast<double>(take);
    done += take;
    ++batch_no;
  }
  ++st.epoch;
  return total / static_cast<double>(ds.size());
}

struct HistoryRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct FitResult {
  std::string checkpoint_path;
  std::vector<HistoryRow> history;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;  // 0 means the initial weights were never improved on
};

inline void write_history_csv(const std::vector<HistoryRow>& history,
                              const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "cannot open " + path + " for writing");
  os << "epoch,train_loss,val_loss\n";
  char buf[80];
  for (const HistoryRow& row : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", row.epoch, row.train_loss,
                  row.val_loss);
    os << buf;
  }
  os.flush();
  require(os.good(), "write failed on " + path);
}

// Trains for up to max_epochs, evaluating validation loss after each epoch
// and keeping the checkpoint of the best validation loss seen (the initial
// weights count as the starting checkpoint). History goes to history.csv,
// the best weights to best.ckpt, both under out_dir.
inline FitResult fit(Network& net, const Dataset& train_ds, const Dataset& val_ds,
                     const OptimConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  require(train_ds.size() > 0, "fit: empty training dataset");
  if (cfg.max_epochs > 0)
    require(val_ds.size() > 0, "fit: empty validation dataset");

  FitResult res;
  res.checkpoint_path = out_dir + "/best.ckpt";
  save_checkpoint(net, res.checkpoint_path);

  TrainState st = init_train_state(net);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double train_loss = train_epoch(net, train_ds, st, cfg);
    const double val_loss = dataset_loss(net, val_ds, cfg.batch_size);
    res.history.push_back({epoch, train_loss, val_loss});
    if (val_loss < res.best_val) {
      res.best_val = val_loss;
      res.best_epoch = epoch;
      save_checkpoint(net, res.checkpoint_path);
    }
  }
  write_history_csv(res.history, out_dir + "/history.csv");
  return res;
}

}  // namespace usegnet
