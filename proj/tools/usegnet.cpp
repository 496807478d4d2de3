#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "usegnet/cli.hpp"

namespace {

void parse_dims(const std::string& s, int& nx, int& ny, int& nz) {
  char tail;
  if (std::sscanf(s.c_str(), "%dx%dx%d%c", &nx, &ny, &nz, &tail) != 3 ||
      nx < 1 || ny < 1 || nz < 1)
    throw CLI::ValidationError("--dims", "expected XxYxZ with positive sizes, got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U-SegNet brain tissue segmentation toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  usegnet::PhantomCmd phantom;
  std::string phantom_dims = "64x64x16";
  CLI::App* p = app.add_subcommand("phantom", "Generate synthetic labeled volumes");
  p->add_option("--count", phantom.count, "Number of volume pairs")
      ->capture_default_str();
  p->add_option("--dims", phantom_dims, "Volume dims XxYxZ")->capture_default_str();
  p->add_option("--seed", phantom.seed, "Base seed; volume i uses seed+i")
      ->capture_default_str();
  p->add_option("--noise", phantom.noise_std, "Noise sigma as fraction of the tissue gap")
      ->capture_default_str();
  p->add_option("--bias", phantom.bias_amplitude, "Bias field amplitude")
      ->capture_default_str();
  p->add_option("--out", phantom.out, "Output directory")->required();
  p->callback([&] {
    parse_dims(phantom_dims, phantom.nx, phantom.ny, phantom.nz);
    rc = usegnet::cmd_phantom(phantom);
  });

  usegnet::TrainCmd train;
  CLI::App* t = app.add_subcommand("train", "Train a segmentation network");
  t->set_config("--config", "", "Config file with key=value lines");
  t->add_option("--data", train.data, "Phantom manifest JSON")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--model", train.model, "segnet | usegnet | usegnet2 | unet")
      ->capture_default_str();
  t->add_option("--lr", train.learning_rate, "Learning rate")->capture_default_str();
  t->add_option("--momentum", train.momentum, "SGD momentum")->capture_default_str();
  t->add_option("--l2", train.l2, "L2 regularization strength")->capture_default_str();
  t->add_option("--batch", train.batch_size, "Mini-batch size")->capture_default_str();
  t->add_option("--epochs", train.max_epochs, "Maximum epochs")->capture_default_str();
  t->add_option("--seed", train.seed, "Seed for init, shuffling and split")
      ->capture_default_str();
  t->add_option("--train", train.split_train, "Training volume count")
      ->capture_default_str();
  t->add_option("--val", train.split_val, "Validation volume count")
      ->capture_default_str();
  t->add_option("--test", train.split_test, "Test volume count")->capture_default_str();
  t->add_option("--bg-threshold", train.bg_threshold,
                "Drop training patches whose background fraction reaches this")
      ->capture_default_str();
  t->add_option("--fusion", train.fusion, "majority | average")->capture_default_str();
  t->add_flag("--dry-run", train.dry_run,
              "Write the run manifest and stop before training");
  t->add_flag("--eval-test", train.eval_test,
              "Evaluate the best checkpoint on the test split after training");
  t->callback([&] { rc = usegnet::cmd_train(train); });

  usegnet::SegmentCmd segment;
  std::string segment_dims;
  CLI::App* s = app.add_subcommand("segment", "Segment a volume with a checkpoint");
  s->add_option("--checkpoint", segment.checkpoint, "Checkpoint file")->required();
  s->add_option("--model", segment.model, "Architecture the checkpoint was trained with")
      ->capture_default_str();
  s->add_option("--volume", segment.volume, "Input volume (.nii or raw)")->required();
  s->add_option("--dims", segment_dims, "Raw volume dims XxYxZ");
  s->add_option("--element", segment.element, "Raw element type u8|i16|f32|f64")
      ->capture_default_str();
  s->add_option("--fusion", segment.fusion, "majority | average")->capture_default_str();
  s->add_option("--out", segment.out, "Output directory")->required();
  s->add_option("--overlay", segment.overlay, "Slice indices to export as PPM");
  s->add_flag("--overlay-all", segment.overlay_all, "Export every slice as PPM");
  s->callback([&] {
    if (!segment_dims.empty())
      parse_dims(segment_dims, segment.nx, segment.ny, segment.nz);
    rc = usegnet::cmd_segment(segment);
  });

  usegnet::EvaluateCmd evaluate;
  std::string eval_dims;
  CLI::App* e = app.add_subcommand("evaluate", "Score predictions against truth labels");
  e->add_option("--pred", evaluate.pred, "Predicted label volumes")->required();
  e->add_option("--truth", evaluate.truth, "Ground-truth label volumes")->required();
  e->add_option("--truth-convention", evaluate.truth_convention, "ibsr | model")
      ->capture_default_str();
  e->add_option("--dims", eval_dims, "Raw label volume dims XxYxZ");
  e->add_option("--out", evaluate.out, "Directory for report.csv (optional)");
  e->callback([&] {
    if (!eval_dims.empty())
      parse_dims(eval_dims, evaluate.nx, evaluate.ny, evaluate.nz);
    rc = usegnet::cmd_evaluate(evaluate);
  });

  usegnet::ParamsCmd params;
  CLI::App* q = app.add_subcommand("params", "Print the learnable parameter breakdown");
  q->add_option("--model", params.model, "segnet | usegnet | usegnet2 | unet")
      ->capture_default_str();
  q->add_option("--width-div", params.width_div, "Channel width divisor")
      ->capture_default_str();
  q->callback([&] { rc = usegnet::cmd_params(params); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  } catch (const usegnet::numeric_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 3;
  } catch (const usegnet::data_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }
  return rc;
}
