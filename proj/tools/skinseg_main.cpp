#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "skinseg/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct SharedFlags {
  std::string config;
  std::string out;
  std::string parts_dir;
  long long seed = -1;
  bool dry_run = false;
};

void add_shared(CLI::App* cmd, SharedFlags& flags) {
  cmd->add_option("--config", flags.config, "flat key-value TOML config file");
  cmd->add_option("--seed", flags.seed, "master seed (overrides config)");
  cmd->add_option("--out", flags.out, "output directory (overrides config)");
  cmd->add_option("--parts-dir", flags.parts_dir, "part-mask directory (overrides dataset layout)");
  cmd->add_flag("--dry-run", flags.dry_run, "validate inputs and exit without doing work");
}

skinseg::AppConfig resolve_config(const SharedFlags& flags) {
  skinseg::AppConfig cfg = skinseg::load_app_config(
      flags.config.empty() ? std::filesystem::path{} : std::filesystem::path(flags.config));
  if (flags.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(flags.seed);
    cfg.model.seed = cfg.seed;
  }
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  if (!flags.parts_dir.empty()) cfg.parts_dir = flags.parts_dir;
  return cfg;
}

skinseg::Split parse_split(const std::string& s) {
  if (s == "train") return skinseg::Split::train;
  if (s == "val") return skinseg::Split::val;
  if (s == "test") return skinseg::Split::test;
  throw skinseg::ConfigError("unknown split '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skinseg: lightweight attention-guided skin segmentation"};
  app.require_subcommand(1);

  SharedFlags train_flags, eval_flags, infer_flags, relabel_flags, synth_flags;

  auto* train = app.add_subcommand("train", "train a model");
  add_shared(train, train_flags);
  std::string train_data;
  train->add_option("--data", train_data, "dataset root (overrides config data_root)");
  std::string train_epochs;
  train->add_option("--epochs", train_epochs, "epoch count (overrides config)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_shared(eval, eval_flags);
  std::string eval_ckpt, eval_data, eval_split = "val", eval_dump;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--data", eval_data, "dataset root");
  eval->add_option("--split", eval_split, "train|val|test (default val)");
  eval->add_option("--dump-pred", eval_dump, "also write binarized predictions here");

  auto* infer = app.add_subcommand("infer", "segment one image");
  add_shared(infer, infer_flags);
  std::string infer_ckpt, infer_image, infer_parts;
  bool auto_resize = false;
  infer->add_option("--checkpoint", infer_ckpt, "model checkpoint")->required();
  infer->add_option("--image", infer_image, "input RGB PNG")->required();
  infer->add_option("--parts", infer_parts, "part-mask PNG for the image");
  infer->add_flag("--auto-resize", auto_resize, "resample inputs to the model resolution");

  auto* relabel = app.add_subcommand("relabel", "recursive weakly supervised training");
  add_shared(relabel, relabel_flags);
  std::string relabel_data;
  relabel->add_option("--data", relabel_data, "dataset root (overrides config data_root)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_shared(synth, synth_flags);
  skinseg::SynthDatasetOptions synth_opts;
  synth->add_option("--num", synth_opts.num, "total scene count (80/20 train/val split)");
  synth->add_option("--size", synth_opts.size, "canvas size in pixels");
  synth->add_option("--noise-iou-target", synth_opts.noise_iou_target,
                    "target IoU(noisy,true) for training labels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (train->parsed()) {
      skinseg::AppConfig cfg = resolve_config(train_flags);
      if (!train_data.empty()) cfg.data_root = train_data;
      if (!train_epochs.empty()) cfg.epochs = std::stoi(train_epochs);
      skinseg::run_train(cfg, train_flags.dry_run);
    } else if (eval->parsed()) {
      skinseg::AppConfig cfg = resolve_config(eval_flags);
      skinseg::EvalOptions opts;
      opts.checkpoint = eval_ckpt;
      opts.data_root = eval_data.empty() ? cfg.data_root : std::filesystem::path(eval_data);
      opts.split = parse_split(eval_split);
      opts.out_dir = cfg.out_dir;
      opts.parts_dir = cfg.parts_dir;
      if (!eval_dump.empty()) opts.dump_pred_dir = eval_dump;
      if (eval_flags.dry_run) {
        skinseg::load_checkpoint(opts.checkpoint);
        skinseg::load_dataset(opts.data_root, opts.split);
        std::cout << "dry-run ok\n";
        return kExitOk;
      }
      const skinseg::Metrics m = skinseg::run_eval(opts);
      std::printf("precision=%.6f recall=%.6f f1=%.6f cdr=%.6f dsc=%.6f iou=%.6f\n", m.precision,
                  m.recall, m.f1, m.cdr, m.dsc, m.iou);
    } else if (infer->parsed()) {
      skinseg::AppConfig cfg = resolve_config(infer_flags);
      skinseg::InferOptions opts;
      opts.checkpoint = infer_ckpt;
      opts.image = infer_image;
      if (!infer_parts.empty()) opts.parts = infer_parts;
      opts.parts_dir = cfg.parts_dir;
      opts.out_dir = cfg.out_dir;
      opts.auto_resize = auto_resize;
      if (infer_flags.dry_run) {
        skinseg::load_checkpoint(opts.checkpoint);
        std::cout << "dry-run ok\n";
        return kExitOk;
      }
      skinseg::run_infer(opts);
    } else if (relabel->parsed()) {
      skinseg::AppConfig cfg = resolve_config(relabel_flags);
      if (!relabel_data.empty()) cfg.data_root = relabel_data;
      if (relabel_flags.dry_run) {
        cfg.model.validate();
        cfg.relabel.validate();
        skinseg::load_dataset(cfg.data_root, skinseg::Split::train);
        skinseg::load_dataset(cfg.data_root, skinseg::Split::val);
        std::cout << "dry-run ok\n";
        return kExitOk;
      }
      const skinseg::RelabelOutcome out = skinseg::run_relabel(cfg);
      std::printf("recursive_f1=%.6f direct_f1=%.6f final_generation=%s\n", out.recursive.f1,
                  out.direct.f1, out.state.final_generation.c_str());
    } else if (synth->parsed()) {
      skinseg::AppConfig cfg = resolve_config(synth_flags);
      if (synth_flags.seed >= 0) synth_opts.seed = static_cast<std::uint64_t>(synth_flags.seed);
      if (synth_flags.dry_run) {
        if (synth_opts.num < 2) throw skinseg::ConfigError("synth: need at least 2 scenes");
        std::cout << "dry-run ok\n";
        return kExitOk;
      }
      const auto report = skinseg::write_synth_dataset(cfg.out_dir, synth_opts);
      std::ofstream rep(cfg.out_dir / "generator_report.txt", std::ios::trunc);
      rep << "train_count: " << report.train_count << "\n";
      rep << "val_count: " << report.val_count << "\n";
      rep << "mean_noisy_iou: " << report.mean_noisy_iou << "\n";
      std::printf("train=%d val=%d mean_noisy_iou=%.4f\n", report.train_count, report.val_count,
                  report.mean_noisy_iou);
    }
  } catch (const skinseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const skinseg::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const skinseg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
