#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "usegnet/eval.hpp"
#include "usegnet/nifti.hpp"
#include "usegnet/phantom.hpp"
#include "usegnet/trainer.hpp"

namespace usegnet {

// Command implementations behind the CLI front end. Each takes a plain
// options struct, throws data_error / numeric_error on failure, and returns
// the process exit code on success.

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec && std::filesystem::is_directory(dir),
          "cannot create output directory " + dir);
}

inline std::string join_dir(const std::string& dir, const std::string& rel) {
  if (rel.empty() || rel.front() == '/') return rel;
  return (std::filesystem::path(dir) / rel).string();
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

struct PhantomCmd {
  int count = 18;
  int nx = 64, ny = 64, nz = 16;
  std::uint64_t seed = 0;
  double noise_std = 0.15;
  double bias_amplitude = 0.2;
  std::string out;
};

struct ManifestEntry {
  std::string id, volume, labels;
  std::uint64_t seed = 0;
};

struct PhantomManifest {
  int nx = 0, ny = 0, nz = 0;
  RawType element = RawType::f64;
  std::vector<ManifestEntry> entries;
  std::string dir;  // directory the manifest lives in, for relative paths
};

inline int cmd_phantom(const PhantomCmd& cmd) {
  require(cmd.count >= 0, "phantom: count must be >= 0");
  detail::ensure_dir(cmd.out);
  nlohmann::json manifest;
  manifest["dims"] = {cmd.nx, cmd.ny, cmd.nz};
  manifest["element"] = "f64";
  manifest["label_convention"] = "model";
  manifest["volumes"] = nlohmann::json::array();
  for (int i = 0; i < cmd.count; ++i) {
    PhantomSpec spec;
    spec.nx = cmd.nx;
    spec.ny = cmd.ny;
    spec.nz = cmd.nz;
    spec.seed = cmd.seed + static_cast<std::uint64_t>(i);
    spec.noise_std = cmd.noise_std;
    spec.bias_amplitude = cmd.bias_amplitude;
    PhantomResult pr = generate_phantom(spec);
    char name[32];
    std::snprintf(name, sizeof name, "phantom%02d", i);
    const std::string vol_rel = std::string(name) + ".vol.raw";
    const std::string lab_rel = std::string(name) + ".lab.raw";
    save_raw(pr.vol, detail::join_dir(cmd.out, vol_rel), RawType::f64);
    save_raw_labels(pr.labels, detail::join_dir(cmd.out, lab_rel));
    manifest["volumes"].push_back({{"id", name},
                                   {"seed", spec.seed},
                                   {"volume", vol_rel},
                                   {"labels", lab_rel}});
  }
  std::ofstream os(detail::join_dir(cmd.out, "manifest.json"));
  require(os.good(), "cannot write manifest in " + cmd.out);
  os << manifest.dump(2) << "\n";
  os.flush();
  require(os.good(), "write failed on manifest in " + cmd.out);
  std::printf("wrote %d phantom volume pair(s) to %s\n", cmd.count,
              cmd.out.c_str());
  return 0;
}

inline PhantomManifest load_phantom_manifest(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "cannot open manifest " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("manifest " + path + ": invalid JSON: " + e.what());
  }
  PhantomManifest m;
  try {
    m.nx = j.at("dims").at(0).get<int>();
    m.ny = j.at("dims").at(1).get<int>();
    m.nz = j.at("dims").at(2).get<int>();
    m.element = parse_raw_type(j.at("element").get<std::string>());
    require(parse_convention(j.value("label_convention", "model")) ==
                LabelConvention::model,
            "manifest " + path + ": only model-convention labels are produced "
            "by the phantom generator");
    for (const auto& e : j.at("volumes")) {
      ManifestEntry me;
      me.id = e.at("id").get<std::string>();
      me.volume = e.at("volume").get<std::string>();
      me.labels = e.at("labels").get<std::string>();
      me.seed = e.value("seed", 0ull);
      m.entries.push_back(std::move(me));
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error("manifest " + path + ": missing or malformed field: " +
                     e.what());
  }
  m.dir = std::filesystem::path(path).parent_path().string();
  if (m.dir.empty()) m.dir = ".";
  return m;
}

struct TrainCmd {
  std::string data;  // phantom manifest path
  std::string out;
  std::string model = "usegnet";
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double l2 = 1e-4;
  int batch_size = 64;
  int max_epochs = 700;
  std::uint64_t seed = 0;
  int split_train = 6, split_val = 3, split_test = 9;
  double bg_threshold = 1.0;
  std::string fusion = "majority";
  bool dry_run = false;
  bool eval_test = false;
};

namespace detail {

inline std::string join_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (const std::string& id : ids) s += (s.empty() ? "" : ",") + id;
  return s;
}

inline void load_split_group(const PhantomManifest& m,
                             const std::vector<std::string>& ids,
                             std::vector<Volume>& vols,
                             std::vector<LabelVolume>& labs) {
  for (const std::string& id : ids) {
    const ManifestEntry* entry = nullptr;
    for (const ManifestEntry& e : m.entries)
      if (e.id == id) entry = &e;
    require(entry != nullptr, "manifest has no volume id " + id);
    vols.push_back(load_raw(join_dir(m.dir, entry->volume), m.nx, m.ny, m.nz,
                            m.element));
    labs.push_back(load_raw_labels(join_dir(m.dir, entry->labels), m.nx, m.ny,
                                   m.nz, LabelConvention::model));
  }
}

}  // namespace detail

inline int cmd_train(const TrainCmd& cmd) {
  require(!cmd.data.empty(), "train: --data manifest is required");
  require(!cmd.out.empty(), "train: --out directory is required");
  OptimConfig optim;
  optim.learning_rate = cmd.learning_rate;
  optim.momentum = cmd.momentum;
  optim.l2 = cmd.l2;
  optim.batch_size = cmd.batch_size;
  optim.max_epochs = cmd.max_epochs;
  optim.seed = cmd.seed;
  optim.validate();
  require(cmd.bg_threshold >= 0.0 && cmd.bg_threshold <= 1.0,
          "train: bg threshold must lie in [0,1]");
  parse_fusion(cmd.fusion);

  const PhantomManifest manifest = load_phantom_manifest(cmd.data);
  std::vector<std::string> ids;
  for (const ManifestEntry& e : manifest.entries) ids.push_back(e.id);
  const VolumeSplit split = split_volumes(ids, cmd.split_train, cmd.split_val,
                                          cmd.split_test, cmd.seed);

  Network net = build_network(cmd.model);
  net.init_params(cmd.seed);

  detail::ensure_dir(cmd.out);
  {
    std::ofstream os(detail::join_dir(cmd.out, "manifest.txt"));
    require(os.good(), "cannot write run manifest in " + cmd.out);
    os << "model=" << cmd.model << "\n"
       << "data=" << cmd.data << "\n"
       << "out=" << cmd.out << "\n"
       << "learning_rate=" << detail::fmt_g(optim.learning_rate) << "\n"
       << "momentum=" << detail::fmt_g(optim.momentum) << "\n"
       << "l2=" << detail::fmt_g(optim.l2) << "\n"
       << "batch_size=" << optim.batch_size << "\n"
       << "max_epochs=" << optim.max_epochs << "\n"
       << "seed=" << optim.seed << "\n"
       << "split_train=" << cmd.split_train << "\n"
       << "split_val=" << cmd.split_val << "\n"
       << "split_test=" << cmd.split_test << "\n"
       << "bg_threshold=" << detail::fmt_g(cmd.bg_threshold) << "\n"
       << "fusion=" << cmd.fusion << "\n"
       << "patch_size=" << kPatch << "\n"
       << "patch_stride=" << kStride << "\n"
       << "parameter_count=" << net.param_count() << "\n"
       << "train_volumes=" << detail::join_ids(split.train) << "\n"
       << "val_volumes=" << detail::join_ids(split.val) << "\n"
       << "test_volumes=" << detail::join_ids(split.test) << "\n";
    os.flush();
    require(os.good(), "write failed on run manifest in " + cmd.out);
  }
  if (cmd.dry_run) {
    std::printf("%s: %zu parameters; run manifest written to %s\n",
                cmd.model.c_str(), net.param_count(), cmd.out.c_str());
    return 0;
  }

  std::vector<Volume> train_vols, val_vols;
  std::vector<LabelVolume> train_labs, val_labs;
  detail::load_split_group(manifest, split.train, train_vols, train_labs);
  detail::load_split_group(manifest, split.val, val_vols, val_labs);
  Dataset train_ds = build_dataset(std::move(train_vols), std::move(train_labs),
                                   DatasetRole::train, cmd.bg_threshold);
  Dataset val_ds = build_dataset(std::move(val_vols), std::move(val_labs),
                                 DatasetRole::val);

  const FitResult fr = fit(net, train_ds, val_ds, optim, cmd.out);
  std::printf("training done: best validation loss %g at epoch %d\n",
              fr.best_val, fr.best_epoch);
  std::printf("checkpoint: %s\n", fr.checkpoint_path.c_str());

  if (cmd.eval_test && !split.test.empty()) {
    load_checkpoint(net, fr.checkpoint_path);
    std::vector<Volume> test_vols;
    std::vector<LabelVolume> test_labs;
    detail::load_split_group(manifest, split.test, test_vols, test_labs);
    const EvalReport rep = evaluate(net, split.test, test_vols, test_labs,
                                    parse_fusion(cmd.fusion));
    write_report_csv(rep, detail::join_dir(cmd.out, "report.csv"));
    std::fputs(format_report_table(rep).c_str(), stdout);
  }
  return 0;
}

struct SegmentCmd {
  std::string checkpoint, model = "usegnet", volume, out;
  std::string fusion = "majority";
  std::string element = "f64";
  int nx = 0, ny = 0, nz = 0;  // required for raw input volumes
  std::vector<int> overlay;    // slice indices to export
  bool overlay_all = false;
};

inline Volume load_any_volume(const std::string& path, int nx, int ny, int nz,
                              RawType element) {
  if (detail::has_suffix(path, ".nii")) return load_nifti(path).vol;
  require(nx > 0 && ny > 0 && nz > 0,
          "raw volume " + path + " needs --dims XxYxZ");
  return load_raw(path, nx, ny, nz, element);
}

inline LabelVolume load_any_labels(const std::string& path, int nx, int ny,
                                   int nz, LabelConvention conv) {
  if (detail::has_suffix(path, ".nii")) return load_nifti_labels(path, conv);
  require(nx > 0 && ny > 0 && nz > 0,
          "raw label volume " + path + " needs --dims XxYxZ");
  return load_raw_labels(path, nx, ny, nz, conv);
}

inline int cmd_segment(const SegmentCmd& cmd) {
  require(!cmd.checkpoint.empty(), "segment: --checkpoint is required");
  require(!cmd.volume.empty(), "segment: --volume is required");
  require(!cmd.out.empty(), "segment: --out directory is required");
  const FusionMode fusion = parse_fusion(cmd.fusion);

  Network net = build_network(cmd.model);
  load_checkpoint(net, cmd.checkpoint);

  Volume vol = load_any_volume(cmd.volume, cmd.nx, cmd.ny, cmd.nz,
                               parse_raw_type(cmd.element));
  normalize_nonzero(vol, nonzero_stats(vol));

  const LabelVolume pred = segment_volume(net, vol, fusion);
  detail::ensure_dir(cmd.out);
  save_raw_labels(pred, detail::join_dir(cmd.out, "pred.lab.raw"));
  std::printf("segmented %dx%dx%d volume; labels: %s/pred.lab.raw\n", pred.nx,
              pred.ny, pred.nz, cmd.out.c_str());

  std::vector<int> slices = cmd.overlay;
  if (cmd.overlay_all) {
    slices.clear();
    for (int z = 0; z < pred.nz; ++z) slices.push_back(z);
  }
  for (int z : slices) {
    char name[32];
    std::snprintf(name, sizeof name, "overlay_%03d.ppm", z);
    export_overlay(pred, z, detail::join_dir(cmd.out, name));
  }
  if (!slices.empty())
    std::printf("wrote %zu overlay image(s)\n", slices.size());
  return 0;
}

struct EvaluateCmd {
  std::vector<std::string> pred, truth;  // paired paths
  std::string truth_convention = "model";
  int nx = 0, ny = 0, nz = 0;
  std::string out;  // optional report directory
};

inline int cmd_evaluate(const EvaluateCmd& cmd) {
  require(!cmd.pred.empty(), "evaluate: at least one --pred file is required");
  require(cmd.pred.size() == cmd.truth.size(),
          "evaluate: " + std::to_string(cmd.pred.size()) + " predictions vs " +
              std::to_string(cmd.truth.size()) + " truth files");
  const LabelConvention conv = parse_convention(cmd.truth_convention);

  std::vector<std::string> ids;
  std::vector<LabelVolume> preds, truths;
  for (std::size_t i = 0; i < cmd.pred.size(); ++i) {
    preds.push_back(load_any_labels(cmd.pred[i], cmd.nx, cmd.ny, cmd.nz,
                                    LabelConvention::model));
    truths.push_back(remap_labels(
        load_any_labels(cmd.truth[i], cmd.nx, cmd.ny, cmd.nz, conv),
        LabelConvention::model));
    ids.push_back(std::filesystem::path(cmd.pred[i]).filename().string());
  }
  const EvalReport rep = evaluate_predictions(ids, preds, truths);
  std::fputs(format_report_table(rep).c_str(), stdout);
  if (!cmd.out.empty()) {
    detail::ensure_dir(cmd.out);
    write_report_csv(rep, detail::join_dir(cmd.out, "report.csv"));
  }
  return 0;
}

struct ParamsCmd {
  std::string model = "usegnet";
  int width_div = 1;
};

inline int cmd_params(const ParamsCmd& cmd) {
  const Network net = build_network(cmd.model, cmd.width_div);
  std::printf("%s\n", cmd.model.c_str());
  for (const Layer& ly : net.layers) {
    if (ly.kind == LayerKind::conv || ly.kind == LayerKind::tconv) {
      const ConvParams& c = net.convs[ly.param];
      std::printf("%-16s %s %dx%d %4d->%-4d %8zu\n", ly.id.c_str(),
                  ly.kind == LayerKind::tconv ? "tconv" : "conv ", c.kh, c.kw,
                  c.in_ch, c.out_ch, c.param_count());
    } else if (ly.kind == LayerKind::bn) {
      const BatchNormParams& b = net.bns[ly.param];
      std::printf("%-16s bn    %9d %10zu\n", ly.id.c_str(), b.channels,
                  b.param_count());
    }
  }
  std::printf("conv parameters %zu\n", net.conv_param_count());
  std::printf("bn parameters %zu\n", net.bn_param_count());
  std::printf("total %zu\n", net.param_count());
  return 0;
}

}  // namespace usegnet
