#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "usegnet/phantom.hpp"
#include "usegnet/trainer.hpp"

using namespace usegnet;
using testutil::scratch_dir;

namespace {

Dataset phantom_dataset(std::uint64_t seed, DatasetRole role, int nz = 2) {
  PhantomSpec spec;
  spec.nx = 48;
  spec.ny = 48;
  spec.nz = nz;
  spec.seed = seed;
  PhantomResult pr = generate_phantom(spec);
  return build_dataset({std::move(pr.vol)}, {std::move(pr.labels)}, role);
}

bool params_equal(const Network& a, const Network& b) {
  for (std::size_t i = 0; i < a.convs.size(); ++i)
    if (a.convs[i].w != b.convs[i].w || a.convs[i].b != b.convs[i].b) return false;
  for (std::size_t i = 0; i < a.bns.size(); ++i)
    if (a.bns[i].gamma != b.bns[i].gamma || a.bns[i].beta != b.bns[i].beta)
      return false;
  return true;
}

}  // namespace

TEST_CASE("momentum update follows the textbook arithmetic") {
  OptimConfig cfg;
  cfg.momentum = 0.9;
  cfg.l2 = 0.0;

  // One step at learning rate 0.05 with unit gradient.
  std::vector<double> w{1.0}, g{1.0}, v{0.0};
  cfg.learning_rate = 0.05;
  detail::momentum_update(w, g, v, cfg);
  CHECK(v[0] == Catch::Approx(-0.05).margin(1e-15));
  CHECK(w[0] == Catch::Approx(0.95).margin(1e-15));

  // Two steps at learning rate 0.1: the velocity compounds.
  w = {1.0};
  v = {0.0};
  cfg.learning_rate = 0.1;
  detail::momentum_update(w, g, v, cfg);
  CHECK(v[0] == Catch::Approx(-0.1).margin(1e-15));
  detail::momentum_update(w, g, v, cfg);
  CHECK(v[0] == Catch::Approx(-0.19).margin(1e-15));
  CHECK(w[0] == Catch::Approx(1.0 - 0.1 - 0.19).margin(1e-15));
}

TEST_CASE("weight decay adds l2 times the weight to the gradient") {
  OptimConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.0;
  cfg.l2 = 0.5;
  std::vector<double> w{2.0}, g{0.0}, v{0.0};
  detail::momentum_update(w, g, v, cfg);
  CHECK(v[0] == Catch::Approx(-0.1).margin(1e-15));  // -lr * (0 + 0.5*2)
  CHECK(w[0] == Catch::Approx(1.9).margin(1e-15));
}

TEST_CASE("a zero learning rate never moves the parameters") {
  Rng rng = seeded_rng(61);
  Network net = build_usegnet(8);
  net.init_params(5);
  Network before = net;

  Tensor x = testutil::random_tensor(2, 3, 8, 8, rng);
  LabelMap labels(2, 8, 8);
  ForwardCache cache;
  auto ce = softmax_ce(net.forward_train(x, cache), labels);
  net.zero_grads();
  net.backward(x, cache, ce.grad_logits);

  TrainState st = init_train_state(net);
  OptimConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.l2 = 0.0;
  sgd_step(net, st, cfg);
  CHECK(params_equal(net, before));
}

TEST_CASE("frozen layers keep their parameters while others move") {
  Rng rng = seeded_rng(62);
  Network net = build_usegnet(8);
  net.init_params(6);
  Network before = net;

  Tensor x = testutil::random_tensor(2, 3, 8, 8, rng);
  LabelMap labels(2, 8, 8);
  for (std::size_t i = 0; i < labels.v.size(); ++i)
    labels.v[i] = static_cast<std::uint8_t>(i % 4);
  ForwardCache cache;
  auto ce = softmax_ce(net.forward_train(x, cache), labels);
  net.zero_grads();
  net.backward(x, cache, ce.grad_logits);

  TrainState st = init_train_state(net);
  OptimConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.frozen = {"enc1_conv1", "enc1_conv1_bn"};
  sgd_step(net, st, cfg);

  for (std::size_t i = 0; i < net.convs.size(); ++i) {
    if (net.conv_owner[i] == "enc1_conv1") {
      CHECK(net.convs[i].w == before.convs[i].w);
      for (double vv : st.vel_w[i]) CHECK(vv == 0.0);
    }
    if (net.conv_owner[i] == "dec1_conv2") CHECK(net.convs[i].w != before.convs[i].w);
  }
  for (std::size_t i = 0; i < net.bns.size(); ++i)
    if (net.bn_owner[i] == "enc1_conv1_bn") {
      CHECK(net.bns[i].gamma == before.bns[i].gamma);
      CHECK(net.bns[i].beta == before.bns[i].beta);
    }
}

TEST_CASE("the freeze schedule complements the unfreeze list") {
  Network net = build_usegnet(8);
  OptimConfig cfg = apply_freeze_schedule(net, OptimConfig{}, {"skip1_conv"});
  CHECK(cfg.frozen.count("skip1_conv") == 0);
  CHECK(cfg.frozen.count("enc1_conv1") == 1);
  CHECK(cfg.frozen.size() == param_layer_ids(net).size() - 1);
  CHECK_THROWS_WITH(apply_freeze_schedule(net, OptimConfig{}, {"nope"}),
                    Catch::Matchers::ContainsSubstring("unknown layer id"));
}

TEST_CASE("sgd never touches batch-norm running statistics") {
  Rng rng = seeded_rng(63);
  Network net = build_segnet(8);
  net.init_params(7);
  for (BatchNormParams& b : net.bns) {
    std::fill(b.run_mean.begin(), b.run_mean.end(), 0.33);
    std::fill(b.run_var.begin(), b.run_var.end(), 0.44);
  }
  Tensor x = testutil::random_tensor(1, 3, 8, 8, rng);
  LabelMap labels(1, 8, 8);
  ForwardCache cache;
  Tensor logits = net.forward_train(x, cache);  // this refreshes running stats
  net.zero_grads();
  net.backward(x, cache, softmax_ce(logits, labels).grad_logits);
  std::vector<std::vector<double>> means, vars;
  for (const BatchNormParams& b : net.bns) {
    means.push_back(b.run_mean);
    vars.push_back(b.run_var);
  }
  TrainState st = init_train_state(net);
  OptimConfig cfg;
  sgd_step(net, st, cfg);  // ...but the optimizer itself must not
  for (std::size_t i = 0; i < net.bns.size(); ++i) {
    CHECK(net.bns[i].run_mean == means[i]);
    CHECK(net.bns[i].run_var == vars[i]);
  }
}

TEST_CASE("epoch shuffles are seeded and epoch-dependent") {
  const auto a = detail::shuffled_indices(20, 42, 0);
  const auto b = detail::shuffled_indices(20, 42, 0);
  const auto c = detail::shuffled_indices(20, 42, 1);
  const auto d = detail::shuffled_indices(20, 43, 0);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a != d);
}

TEST_CASE("the final short batch still trains") {
  Dataset ds = phantom_dataset(70, DatasetRole::train);
  ds.refs.resize(1);  // a single patch, far below the batch size
  Network net = build_usegnet(8);
  net.init_params(8);
  Network before = net;
  TrainState st = init_train_state(net);
  OptimConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 64;
  train_epoch(net, ds, st, cfg);
  CHECK(st.epoch == 1);
  CHECK(!params_equal(net, before));
}

TEST_CASE("training loss is the patch-weighted mean over batches") {
  // With every parameter frozen and three copies of the same patch, each
  // batch sees identical statistics, so the epoch loss must equal the
  // single-batch loss no matter how the batches split.
  Dataset ds = phantom_dataset(71, DatasetRole::train);
  REQUIRE(ds.size() >= 1u);
  ds.refs = {ds.refs[0], ds.refs[0], ds.refs[0]};

  auto run = [&](int batch_size) {
    Network net = build_usegnet(8);
    net.init_params(9);
    TrainState st = init_train_state(net);
    OptimConfig cfg;
    cfg.batch_size = batch_size;
    cfg.frozen = param_layer_ids(net);
    return train_epoch(net, ds, st, cfg);
  };
  const double split_23 = run(2);  // batches of 2 and 1
  const double whole = run(3);
  CHECK(split_23 == Catch::Approx(whole).margin(1e-12));
}

TEST_CASE("two training runs from the same seed are bit-identical") {
  Dataset ds = phantom_dataset(72, DatasetRole::train);
  auto run = [&] {
    Network net = build_usegnet(8);
    net.init_params(10);
    TrainState st = init_train_state(net);
    OptimConfig cfg;
    cfg.batch_size = 4;
    cfg.seed = 33;
    train_epoch(net, ds, st, cfg);
    train_epoch(net, ds, st, cfg);
    return net;
  };
  Network a = run();
  Network b = run();
  CHECK(params_equal(a, b));
  for (std::size_t i = 0; i < a.bns.size(); ++i) {
    CHECK(a.bns[i].run_mean == b.bns[i].run_mean);
    CHECK(a.bns[i].run_var == b.bns[i].run_var);
  }
}

TEST_CASE("diverged training raises a numeric error") {
  Dataset ds = phantom_dataset(73, DatasetRole::train);
  Network net = build_segnet(8);
  net.init_params(11);
  // Large enough that the conv output itself overflows to infinity; smaller
  // poisons get squashed back to finite values by the following batchnorm.
  for (double& w : net.convs[0].w) w = 1e308;
  TrainState st = init_train_state(net);
  OptimConfig cfg;
  CHECK_THROWS_AS(train_epoch(net, ds, st, cfg), numeric_error);
}

TEST_CASE("dataset_loss equals a single inference pass over everything") {
  Dataset ds = phantom_dataset(74, DatasetRole::val);
  Network net = build_usegnet(8);
  net.init_params(12);
  // Populate the running statistics so inference mode is legal.
  std::vector<std::size_t> warm{0, 1};
  auto [wx, wl] = assemble_batch(ds, warm);
  ForwardCache cache;
  net.forward_train(wx, cache);

  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  auto [input, labels] = assemble_batch(ds, all);
  const double whole = softmax_ce(net.forward_infer(input), labels).loss;
  CHECK(dataset_loss(net, ds, 3) == Catch::Approx(whole).margin(1e-12));
  CHECK(dataset_loss(net, ds, 1000) == Catch::Approx(whole).margin(1e-12));
}

TEST_CASE("fit keeps the best validation checkpoint and writes history") {
  const std::string dir = scratch_dir("fit");
  Dataset train_ds = phantom_dataset(75, DatasetRole::train);
  Dataset val_ds = phantom_dataset(76, DatasetRole::val);

  Network net = build_usegnet(8);
  net.init_params(13);
  OptimConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 3;
  cfg.seed = 1;
  FitResult fr = fit(net, train_ds, val_ds, cfg, dir);

  REQUIRE(fr.history.size() == 3u);
  for (int e = 0; e < 3; ++e) {
    CHECK(fr.history[e].epoch == e + 1);
    CHECK(std::isfinite(fr.history[e].train_loss));
    CHECK(std::isfinite(fr.history[e].val_loss));
  }
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (const HistoryRow& row : fr.history)
    if (row.val_loss < best) {
      best = row.val_loss;
      best_epoch = row.epoch;
    }
  CHECK(fr.best_val == best);
  CHECK(fr.best_epoch == best_epoch);

  // The stored checkpoint reproduces the best validation loss exactly.
  Network loaded = build_usegnet(8);
  load_checkpoint(loaded, fr.checkpoint_path);
  CHECK(dataset_loss(loaded, val_ds, cfg.batch_size) ==
        Catch::Approx(fr.best_val).margin(1e-12));

  std::ifstream is(dir + "/history.csv");
  REQUIRE(is.good());
  std::string line;
  std::getline(is, line);
  CHECK(line == "epoch,train_loss,val_loss");
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("fit validates its inputs") {
  const std::string dir = scratch_dir("fit_bad");
  Network net = build_usegnet(8);
  net.init_params(14);
  Dataset empty;
  Dataset ok = phantom_dataset(77, DatasetRole::train);
  OptimConfig cfg;
  cfg.max_epochs = 1;
  CHECK_THROWS_AS(fit(net, empty, ok, cfg, dir), data_error);
  CHECK_THROWS_AS(fit(net, ok, empty, cfg, dir), data_error);
  OptimConfig bad;
  bad.momentum = 1.5;
  CHECK_THROWS_AS(fit(net, ok, ok, bad, dir), data_error);
}
