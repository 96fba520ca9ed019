#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "skinseg/trainer.hpp"
#include "skinseg/types.hpp"

namespace skinseg {

struct RelabelSchedule {
  int warmup_rounds = 2;
  double t0 = 0.2;
  double t_step = 0.05;
  int epochs_per_round = 1;
  enum class Monitor { f1, dsc };
  Monitor monitor = Monitor::f1;
  int max_rounds = 16;   // safety bound on modification rounds
  int final_epochs = 4;  // continued training on the rolled-back generation

  void validate() const {
    if (warmup_rounds < 1) throw ConfigError("relabel: warmup_rounds must be >= 1");
    if (t0 <= 0 || t0 >= 1) throw ConfigError("relabel: t0 must be in (0,1)");
    if (t_step <= 0) throw ConfigError("relabel: t_step must be > 0");
    if (epochs_per_round < 1) throw ConfigError("relabel: epochs_per_round must be >= 1");
    if (max_rounds < 1) throw ConfigError("relabel: max_rounds must be >= 1");
    if (final_epochs < 0) throw ConfigError("relabel: final_epochs must be >= 0");
  }
};

/// The threshold never schedules past this; pathological label erasure guard.
inline constexpr double kRelabelThresholdCap = 0.95;

struct RelabelState {
  int round_index = 0;     // modification rounds completed
  double current_t = 0.0;  // t0 + t_step · round_index
  std::vector<std::string> label_generations;  // "labels_gen0" (originals) onward
  std::vector<std::pair<int, double>> validation_history;  // round 0 = post-warm-up
  bool stopped = false;
  std::string final_generation;
  int epochs_used = 0;
};

/// Eq.-style per-pixel rule: inside the body, keep a positive label only when
/// prev·prob exceeds t; outside the body, labels pass through untouched.
BinaryMask relabel_mask(const BinaryMask& prev, const SkinProbMap<Real>& prob,
                        const BinaryMask& body, double t);

/// Index of the first entry strictly below its predecessor, or -1.
int first_drop_index(const std::vector<double>& metrics);

/// §-style recursive weakly supervised training: warm-up on the original
/// labels, then rounds of (infer attention, relabel at the scheduled t,
/// persist generation, train, validate) until the monitored validation metric
/// drops, then roll the labels back one generation and continue training.
/// Every generation is persisted under run_dir and reloaded for the rollback.
RelabelState run_recursive_training(Model& model, Adam& adam, const LoadedDataset& train,
                                    const LoadedDataset& val, const RelabelSchedule& schedule,
                                    const LossConfig& loss_cfg, const TrainSchedule& sched,
                                    const std::filesystem::path& run_dir, std::uint64_t seed);

}  // namespace skinseg
