#pragma once

#include <filesystem>
#include <optional>

#include "skinseg/checkpoint.hpp"
#include "skinseg/config.hpp"
#include "skinseg/relabel.hpp"
#include "skinseg/synth.hpp"
#include "skinseg/trainer.hpp"

namespace skinseg {

/// Writes report.csv (header + one row: precision,recall,f1,cdr,dsc,iou,params)
/// and report.txt (key: value lines) into out_dir.
void write_report(const std::filesystem::path& out_dir, const Metrics& m, std::int64_t params);

/// File-backend provider for a split; parts_override (when non-empty) wins
/// over the dataset's own parts directory.
std::unique_ptr<MaskProvider> provider_for_split(const std::filesystem::path& root, Split split,
                                                 const std::filesystem::path& parts_override);

struct TrainOutcome {
  Metrics val_metrics;
  std::int64_t params = 0;
  std::filesystem::path checkpoint;
};

TrainOutcome run_train(const AppConfig& cfg, bool dry_run);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_root;
  Split split = Split::val;
  std::filesystem::path out_dir;
  std::filesystem::path parts_dir;
  std::filesystem::path dump_pred_dir;  // when non-empty: binarized predictions as PNGs
};

Metrics run_eval(const EvalOptions& opts);

struct InferOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::filesystem::path parts;      // explicit part-mask file
  std::filesystem::path parts_dir;  // or a directory keyed by image stem
  std::filesystem::path out_dir;
  bool auto_resize = false;
};

void run_infer(const InferOptions& opts);

struct RelabelOutcome {
  RelabelState state;
  Metrics recursive;
  Metrics direct;
};

/// Recursive weakly supervised training plus a direct-training baseline with
/// the same total epoch budget and seeds; both land in the report.
RelabelOutcome run_relabel(const AppConfig& cfg);

}  // namespace skinseg
