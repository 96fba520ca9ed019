#include "skinseg/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "skinseg/masks.hpp"
#include "skinseg/png_io.hpp"

namespace skinseg {

namespace {

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void check_finite_metrics(const Metrics& m) {
  for (double v : {m.precision, m.recall, m.f1, m.cdr, m.dsc, m.iou}) {
    if (!std::isfinite(v)) throw NumericError("non-finite metric in report");
  }
}

}  // namespace

void write_report(const std::filesystem::path& out_dir, const Metrics& m, std::int64_t params) {
  check_finite_metrics(m);
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "report.csv", std::ios::trunc);
    csv << "precision,recall,f1,cdr,dsc,iou,params\n";
    csv << fmt6(m.precision) << "," << fmt6(m.recall) << "," << fmt6(m.f1) << "," << fmt6(m.cdr)
        << "," << fmt6(m.dsc) << "," << fmt6(m.iou) << "," << params << "\n";
  }
  std::ofstream txt(out_dir / "report.txt", std::ios::trunc);
  txt << "# precision/recall/f1/cdr/iou are pixel-aggregated over the split; dsc is the\n"
         "# per-image mean Dice score\n";
  txt << "precision: " << fmt6(m.precision) << "\n";
  txt << "recall: " << fmt6(m.recall) << "\n";
  txt << "f1: " << fmt6(m.f1) << "\n";
  txt << "cdr: " << fmt6(m.cdr) << "\n";
  txt << "dsc: " << fmt6(m.dsc) << "\n";
  txt << "iou: " << fmt6(m.iou) << "\n";
  txt << "params: " << params << "\n";
}

std::unique_ptr<MaskProvider> provider_for_split(const std::filesystem::path& root, Split split,
                                                 const std::filesystem::path& parts_override) {
  MaskProviderConfig cfg;
  cfg.backend = MaskProviderConfig::Backend::file;
  cfg.masks_dir = parts_override.empty() ? root / split_name(split) / "parts" : parts_override;
  return make_mask_provider(cfg);
}

TrainOutcome run_train(const AppConfig& cfg, bool dry_run) {
  if (cfg.data_root.empty()) throw ConfigError("train: data_root is required");
  cfg.model.validate();

  const DatasetIndex train_idx = load_dataset(cfg.data_root, Split::train);
  const DatasetIndex val_idx = load_dataset(cfg.data_root, Split::val);
  for (const auto& d : train_idx.diagnostics) std::cerr << "[data] train: " << d << "\n";
  for (const auto& d : val_idx.diagnostics) std::cerr << "[data] val: " << d << "\n";
  if (train_idx.records.empty()) throw DataError("train split holds no usable records");
  if (val_idx.records.empty()) throw DataError("val split holds no usable records");

  Model model(cfg.model);
  TrainOutcome outcome;
  outcome.params = model.parameter_count();
  if (dry_run) {
    std::cout << "dry-run ok: " << train_idx.records.size() << " train / "
              << val_idx.records.size() << " val records, " << outcome.params << " parameters\n";
    return outcome;
  }

  const auto train_provider = provider_for_split(cfg.data_root, Split::train, cfg.parts_dir);
  const auto val_provider = provider_for_split(cfg.data_root, Split::val, cfg.parts_dir);
  const LoadedDataset train_data = load_samples(train_idx, *train_provider);
  const LoadedDataset val_data = load_samples(val_idx, *val_provider);

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream log(cfg.out_dir / "train_log.txt", std::ios::trunc);

  Adam adam;
  Rng order_rng(mix_seed(cfg.seed, 0x0E0C));
  for (int e = 0; e < cfg.epochs; ++e) {
    const double lr = cfg.train.lr0 * std::pow(cfg.train.decay, e);
    const double loss = train_epoch(model, adam, train_data, nullptr, cfg.loss, cfg.train, lr,
                                    order_rng, mix_seed(cfg.seed, 0xA000 + static_cast<std::uint64_t>(e)));
    const EvalOutcome val = evaluate(model, val_data);
    log << "epoch=" << e << " lr=" << fmt6(lr) << " train_loss=" << fmt6(loss)
        << " val_f1=" << fmt6(val.metrics.f1) << " val_dsc=" << fmt6(val.metrics.dsc) << "\n";
    log.flush();
  }

  outcome.checkpoint = cfg.out_dir / "model.ckpt";
  save_checkpoint(outcome.checkpoint, model);
  outcome.val_metrics = evaluate(model, val_data).metrics;
  write_report(cfg.out_dir, outcome.val_metrics, outcome.params);
  return outcome;
}

Metrics run_eval(const EvalOptions& opts) {
  auto model = load_checkpoint(opts.checkpoint);
  const DatasetIndex idx = load_dataset(opts.data_root, opts.split);
  for (const auto& d : idx.diagnostics) std::cerr << "[data] " << d << "\n";
  if (idx.records.empty()) throw DataError("eval split holds no usable records");
  const auto provider = provider_for_split(opts.data_root, opts.split, opts.parts_dir);
  const LoadedDataset data = load_samples(idx, *provider);

  const EvalOutcome out = evaluate(*model, data);
  if (!opts.dump_pred_dir.empty()) {
    std::filesystem::create_directories(opts.dump_pred_dir);
    for (const auto& s : data.samples) {
      const ForwardResult res = model->forward(s.image, s.parts, false);
      write_binary_mask(opts.dump_pred_dir / (s.stem + ".png"), binarize(res.prob));
    }
  }
  write_report(opts.out_dir, out.metrics, model->parameter_count());
  return out.metrics;
}

void run_infer(const InferOptions& opts) {
  auto model = load_checkpoint(opts.checkpoint);
  const int size = model->config().input_size;
  Tensor<Real> img = read_image(opts.image);
  const std::string stem = opts.image.stem().string();

  PartMask parts;
  if (!opts.parts.empty()) {
    parts = read_part_mask(opts.parts);
  } else if (!opts.parts_dir.empty()) {
    MaskProviderConfig pc;
    pc.backend = MaskProviderConfig::Backend::file;
    pc.masks_dir = opts.parts_dir;
    parts = make_mask_provider(pc)->get_parts(stem, img.h, img.w);
  } else {
    throw ConfigError("infer: either --parts or --parts-dir is required");
  }

  if (img.h != size || img.w != size) {
    if (!opts.auto_resize) {
      throw DataError("infer: input is " + std::to_string(img.w) + "x" + std::to_string(img.h) +
                      " but the model expects " + std::to_string(size) +
                      "; pass --auto-resize to resample");
    }
    img = bilinear_resize(img, size, size);
  }
  if (parts.h() != img.h || parts.w() != img.w) parts = resize_parts(parts, img.h, img.w);
  validate_image(img);

  const ForwardResult res = model->forward(img, parts, false);
  std::filesystem::create_directories(opts.out_dir);
  write_binary_mask(opts.out_dir / (stem + "_mask.png"), binarize(res.prob));

  // attention map: (-1,1) mapped linearly to [0,255]; 0 lands on mid-gray
  MaskPlane vis(res.attention.rows(), res.attention.cols());
  for (Eigen::Index y = 0; y < vis.rows(); ++y) {
    for (Eigen::Index x = 0; x < vis.cols(); ++x) {
      const double v = std::clamp((res.attention(y, x) + 1.0) * 127.5, 0.0, 255.0);
      vis(y, x) = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  write_gray_png(opts.out_dir / (stem + "_attention.png"), vis);
}

RelabelOutcome run_relabel(const AppConfig& cfg) {
  if (cfg.data_root.empty()) throw ConfigError("relabel: data_root is required");
  cfg.model.validate();
  cfg.relabel.validate();

  const DatasetIndex train_idx = load_dataset(cfg.data_root, Split::train);
  const DatasetIndex val_idx = load_dataset(cfg.data_root, Split::val);
  if (train_idx.records.empty() || val_idx.records.empty()) {
    throw DataError("relabel: train/val splits hold no usable records");
  }
  const auto train_provider = provider_for_split(cfg.data_root, Split::train, cfg.parts_dir);
  const auto val_provider = provider_for_split(cfg.data_root, Split::val, cfg.parts_dir);
  const LoadedDataset train_data = load_samples(train_idx, *train_provider);
  const LoadedDataset val_data = load_samples(val_idx, *val_provider);

  std::filesystem::create_directories(cfg.out_dir);

  RelabelOutcome outcome;
  Model model(cfg.model);
  Adam adam;
  outcome.state = run_recursive_training(model, adam, train_data, val_data, cfg.relabel, cfg.loss,
                                         cfg.train, cfg.out_dir, cfg.seed);
  save_checkpoint(cfg.out_dir / "model.ckpt", model);
  outcome.recursive = evaluate(model, val_data).metrics;

  // direct-training baseline: identical seeds and epoch budget, original labels
  Model direct(cfg.model);
  Adam direct_adam;
  Rng order_rng(mix_seed(cfg.seed, 0x0E0C));
  for (int e = 0; e < outcome.state.epochs_used; ++e) {
    const double lr = cfg.train.lr0 * std::pow(cfg.train.decay, e);
    train_epoch(direct, direct_adam, train_data, nullptr, cfg.loss, cfg.train, lr, order_rng,
                mix_seed(cfg.seed, 0xA000 + static_cast<std::uint64_t>(e)));
  }
  outcome.direct = evaluate(direct, val_data).metrics;

  write_report(cfg.out_dir, outcome.recursive, model.parameter_count());
  std::ofstream cmp(cfg.out_dir / "report.txt", std::ios::app);
  cmp << "epochs_used: " << outcome.state.epochs_used << "\n";
  cmp << "final_generation: " << outcome.state.final_generation << "\n";
  cmp << "recursive_f1: " << fmt6(outcome.recursive.f1) << "\n";
  cmp << "direct_f1: " << fmt6(outcome.direct.f1) << "\n";
  cmp << "recursive_dsc: " << fmt6(outcome.recursive.dsc) << "\n";
  cmp << "direct_dsc: " << fmt6(outcome.direct.dsc) << "\n";
  return outcome;
}

}  // namespace skinseg
