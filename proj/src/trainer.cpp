#include "skinseg/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numeric>
#include <thread>

#include "skinseg/png_io.hpp"

namespace skinseg {

void Adam::step(const std::vector<ParamRef>& refs, double lr) {
  if (m_.empty()) {
    m_.reserve(refs.size());
    v_.reserve(refs.size());
    for (const auto& r : refs) {
      m_.push_back(VecX<Real>::Zero(r.size()));
      v_.push_back(VecX<Real>::Zero(r.size()));
    }
  }
  require(m_.size() == refs.size(), "Adam: parameter set changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    Eigen::Map<VecX<Real>> value(refs[i].value, refs[i].size());
    Eigen::Map<const VecX<Real>> grad(refs[i].grad, refs[i].size());
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad.cwiseProduct(grad);
    value.array() -=
        lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

int env_workers() {
  if (const char* env = std::getenv("SKINSEG_NUM_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(4u, hw > 0 ? hw : 1u));
}

LoadedDataset load_samples(const DatasetIndex& index, const MaskProvider& parts_provider) {
  LoadedDataset data;
  data.samples.resize(index.records.size());
  const int workers = std::min<int>(env_workers(), static_cast<int>(index.records.size()));
  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= index.records.size() || failed.load()) break;
      try {
        const auto& rec = index.records[i];
        Sample s;
        s.stem = rec.stem;
        s.image = read_image(rec.image);
        s.label = read_binary_mask(rec.label);
        s.parts = parts_provider.get_parts(rec.stem, s.image.h, s.image.w);
        data.samples[i] = std::move(s);
      } catch (const std::exception& e) {
        std::scoped_lock lock(error_mutex);
        failed = true;
        if (error_message.empty()) error_message = e.what();
      }
    }
  };

  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed) throw DataError("dataset load failed: " + error_message);
  return data;
}

double train_epoch(Model& model, Adam& adam, const LoadedDataset& data,
                   const std::vector<BinaryMask>* labels_override, const LossConfig& loss_cfg,
                   const TrainSchedule& sched, double lr, Rng& order_rng,
                   std::uint64_t augment_salt) {
  if (data.samples.empty()) throw DataError("train_epoch: dataset is empty");
  if (labels_override) {
    require(labels_override->size() == data.samples.size(),
            "train_epoch: labels_override size mismatch");
  }
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  order_rng.shuffle(order);

  auto refs = model.param_refs();
  double loss_sum = 0.0;
  const int batch = std::max(1, sched.batch_size);
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch));
    const double inv_n = 1.0 / static_cast<double>(end - start);
    model.zero_grads();
    for (std::size_t pos = start; pos < end; ++pos) {
      const std::size_t i = order[pos];
      const Sample& s = data.samples[i];
      const BinaryMask& label_src = labels_override ? (*labels_override)[i] : s.label;

      ForwardResult res;
      const BinaryMask* label = &label_src;
      AugmentSample aug;
      if (sched.augment) {
        aug = augment({s.image, label_src, s.parts}, mix_seed(augment_salt, i));
        res = model.forward(aug.image, aug.parts, /*train=*/true);
        label = &aug.label;
      } else {
        res = model.forward(s.image, s.parts, /*train=*/true);
      }

      const Real loss = combined_loss(res.prob, *label, loss_cfg);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss on sample '" + s.stem + "'");
      }
      loss_sum += loss;
      PlaneX<Real> dprob = combined_loss_grad(res.prob, *label, loss_cfg) * inv_n;
      model.backward(dprob);
    }
    adam.step(refs, lr);
  }
  return loss_sum / static_cast<double>(data.samples.size());
}

EvalOutcome evaluate(Model& model, const LoadedDataset& data,
                     const std::vector<BinaryMask>* labels_override) {
  EvalOutcome out;
  out.per_image.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    const ForwardResult res = model.forward(s.image, s.parts, /*train=*/false);
    const BinaryMask pred = binarize(res.prob);
    const BinaryMask& gt = labels_override ? (*labels_override)[i] : s.label;
    out.per_image.push_back(confusion(pred, gt));
  }
  out.metrics = compute_metrics(out.per_image);
  return out;
}

std::vector<SkinProbMap<Real>> infer_attention(Model& model, const LoadedDataset& data) {
  std::vector<SkinProbMap<Real>> maps;
  maps.reserve(data.samples.size());
  for (const Sample& s : data.samples) {
    maps.push_back(model.forward(s.image, s.parts, /*train=*/false).attention);
  }
  return maps;
}

}  // namespace skinseg
