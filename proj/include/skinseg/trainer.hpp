#pragma once

#include <string>
#include <vector>

#include "skinseg/losses.hpp"
#include "skinseg/network.hpp"
#include "skinseg/provider.hpp"
#include "skinseg/rng.hpp"
#include "skinseg/synth.hpp"

namespace skinseg {

/// Adaptive-moment optimizer over the model's parameter views.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamRef>& refs, double lr);

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<VecX<Real>> m_, v_;
};

struct Sample {
  std::string stem;
  Tensor<Real> image;
  BinaryMask label;
  PartMask parts;
};

struct LoadedDataset {
  std::vector<Sample> samples;
};

/// Loader parallelism bound: SKINSEG_NUM_WORKERS, else min(4, hardware).
int env_workers();

/// Decodes every record up front (desk-scale datasets fit in memory).
/// Decoding may fan out over env_workers() threads; the result order is the
/// index order regardless of thread count.
LoadedDataset load_samples(const DatasetIndex& index, const MaskProvider& parts_provider);

struct TrainSchedule {
  double lr0 = 1e-3;
  double decay = 0.96;
  int batch_size = 8;
  bool augment = false;
};

/// One epoch in a seed-determined order; batch-mean gradients + one Adam step
/// per batch. labels_override (parallel to samples) substitutes the ground
/// truth when the relabeler is driving. Returns the mean per-image loss and
/// throws NumericError if it goes non-finite.
double train_epoch(Model& model, Adam& adam, const LoadedDataset& data,
                   const std::vector<BinaryMask>* labels_override, const LossConfig& loss_cfg,
                   const TrainSchedule& sched, double lr, Rng& order_rng,
                   std::uint64_t augment_salt);

struct EvalOutcome {
  Metrics metrics;
  std::vector<ConfusionCounts> per_image;
};

EvalOutcome evaluate(Model& model, const LoadedDataset& data,
                     const std::vector<BinaryMask>* labels_override = nullptr);

/// Forward-only pass returning each sample's pre-omega attention map at image
/// resolution.
std::vector<SkinProbMap<Real>> infer_attention(Model& model, const LoadedDataset& data);

}  // namespace skinseg
