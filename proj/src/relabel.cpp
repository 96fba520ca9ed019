#include "skinseg/relabel.hpp"

#include <fstream>

#include "skinseg/masks.hpp"
#include "skinseg/png_io.hpp"

namespace skinseg {

BinaryMask relabel_mask(const BinaryMask& prev, const SkinProbMap<Real>& prob,
                        const BinaryMask& body, double t) {
  require(prev.values.rows() == prob.rows() && prev.values.cols() == prob.cols() &&
              body.values.rows() == prob.rows() && body.values.cols() == prob.cols(),
          "relabel_mask: shape mismatch");
  require(t > 0.0 && t < 1.0, "relabel_mask: t must be in (0,1)");
  BinaryMask out = prev;
  for (Eigen::Index y = 0; y < prob.rows(); ++y) {
    for (Eigen::Index x = 0; x < prob.cols(); ++x) {
      if (!body.values(y, x)) continue;  // outside the body: untouched
      const Real score = static_cast<Real>(prev.values(y, x)) * prob(y, x);
      out.values(y, x) = score > t ? 1 : 0;
    }
  }
  return out;
}

int first_drop_index(const std::vector<double>& metrics) {
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    if (metrics[i] < metrics[i - 1]) return static_cast<int>(i);
  }
  return -1;
}

namespace {

double monitor_value(const Metrics& m, RelabelSchedule::Monitor monitor) {
  return monitor == RelabelSchedule::Monitor::f1 ? m.f1 : m.dsc;
}

std::string generation_name(int k) { return "labels_gen" + std::to_string(k); }

void persist_generation(const std::filesystem::path& run_dir, const std::string& gen,
                        const LoadedDataset& train, const std::vector<BinaryMask>& labels) {
  // write-new-then-swap so a crash never leaves a half-written generation
  namespace fs = std::filesystem;
  const fs::path tmp = run_dir / (gen + ".tmp");
  const fs::path dst = run_dir / gen;
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  for (std::size_t i = 0; i < train.samples.size(); ++i) {
    write_binary_mask(tmp / (train.samples[i].stem + ".png"), labels[i]);
  }
  fs::remove_all(dst);
  fs::rename(tmp, dst);
}

std::vector<BinaryMask> load_generation(const std::filesystem::path& run_dir,
                                        const std::string& gen, const LoadedDataset& train) {
  std::vector<BinaryMask> labels;
  labels.reserve(train.samples.size());
  for (const auto& s : train.samples) {
    labels.push_back(read_binary_mask(run_dir / gen / (s.stem + ".png")));
  }
  return labels;
}

}  // namespace

RelabelState run_recursive_training(Model& model, Adam& adam, const LoadedDataset& train,
                                    const LoadedDataset& val, const RelabelSchedule& schedule,
                                    const LossConfig& loss_cfg, const TrainSchedule& sched,
                                    const std::filesystem::path& run_dir, std::uint64_t seed) {
  schedule.validate();
  if (train.samples.empty() || val.samples.empty()) {
    throw DataError("recursive training needs non-empty train and val sets");
  }
  std::filesystem::create_directories(run_dir);
  std::ofstream journal(run_dir / "relabel_state.log", std::ios::app);
  if (!journal) throw DataError("cannot open relabel journal in " + run_dir.string());

  RelabelState state;
  Rng order_rng(mix_seed(seed, 0x0E0C));

  std::vector<BinaryMask> labels;
  labels.reserve(train.samples.size());
  for (const auto& s : train.samples) labels.push_back(s.label);
  persist_generation(run_dir, generation_name(0), train, labels);
  state.label_generations.push_back(generation_name(0));

  auto train_round = [&](const std::vector<BinaryMask>& lbls, int epochs) {
    for (int e = 0; e < epochs; ++e) {
      const double lr = sched.lr0 * std::pow(sched.decay, state.epochs_used);
      train_epoch(model, adam, train, &lbls, loss_cfg, sched, lr, order_rng,
                  mix_seed(seed, 0xA000 + static_cast<std::uint64_t>(state.epochs_used)));
      ++state.epochs_used;
    }
  };

  for (int r = 0; r < schedule.warmup_rounds; ++r) train_round(labels, schedule.epochs_per_round);
  double prev_metric = monitor_value(evaluate(model, val).metrics, schedule.monitor);
  state.validation_history.emplace_back(0, prev_metric);
  journal << "round=0 t=0 metric=" << prev_metric << " generation=" << generation_name(0)
          << " note=warmup\n";
  journal.flush();

  state.current_t = schedule.t0;
  bool dropped = false;
  while (state.round_index < schedule.max_rounds && state.current_t <= kRelabelThresholdCap) {
    const double t = state.current_t;
    const std::vector<SkinProbMap<Real>> attention = infer_attention(model, train);
    for (std::size_t i = 0; i < train.samples.size(); ++i) {
      const BinaryMask body = derive_body_mask(train.samples[i].parts);
      labels[i] = relabel_mask(labels[i], attention[i], body, t);
    }
    const int k = state.round_index + 1;
    persist_generation(run_dir, generation_name(k), train, labels);
    state.label_generations.push_back(generation_name(k));

    train_round(labels, schedule.epochs_per_round);
    const double metric = monitor_value(evaluate(model, val).metrics, schedule.monitor);
    state.validation_history.emplace_back(k, metric);
    journal << "round=" << k << " t=" << t << " metric=" << metric
            << " generation=" << generation_name(k) << "\n";
    journal.flush();

    state.round_index = k;
    state.current_t = schedule.t0 + schedule.t_step * state.round_index;
    if (metric < prev_metric) {
      dropped = true;
      state.final_generation = generation_name(k - 1);
      break;
    }
    prev_metric = metric;
  }

  state.stopped = true;
  if (!dropped) {
    // schedule cap reached without a validation drop; keep the last generation
    state.final_generation = state.label_generations.back();
  }
  journal << "stop=" << (dropped ? "validation_drop" : "schedule_cap")
          << " final_generation=" << state.final_generation << "\n";

  labels = load_generation(run_dir, state.final_generation, train);
  for (int e = 0; e < schedule.final_epochs; ++e) train_round(labels, 1);
  journal << "final_epochs=" << schedule.final_epochs << " epochs_used=" << state.epochs_used
          << "\n";
  return state;
}

}  // namespace skinseg
