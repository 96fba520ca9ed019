#include <doctest.h>

#include <fstream>

#include "oracles.hpp"
#include "skinseg/masks.hpp"
#include "skinseg/png_io.hpp"
#include "skinseg/relabel.hpp"
#include "skinseg/synth.hpp"

using namespace skinseg;

namespace {

PlaneX<Real> random_attention(int h, int w, Rng& rng) {
  PlaneX<Real> p(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) p(y, x) = rng.uniform(-0.99, 0.99);
  }
  return p;
}

}  // namespace

TEST_CASE("relabel_mask: a zero previous label stays zero whatever P says") {
  BinaryMask prev, body;
  prev.values = MaskPlane::Zero(3, 3);
  body.values = MaskPlane::Constant(3, 3, 1);
  PlaneX<Real> p = PlaneX<Real>::Constant(3, 3, 0.99);
  const BinaryMask out = relabel_mask(prev, p, body, 0.2);
  CHECK(out.values.sum() == 0);
}

TEST_CASE("relabel_mask: threshold arithmetic at the scheduled endpoints") {
  BinaryMask prev, body;
  prev.values = MaskPlane::Constant(1, 1, 1);
  body.values = MaskPlane::Constant(1, 1, 1);
  PlaneX<Real> p = PlaneX<Real>::Constant(1, 1, 0.3);
  CHECK(relabel_mask(prev, p, body, 0.20).values(0, 0) == 1);  // schedule start
  CHECK(relabel_mask(prev, p, body, 0.35).values(0, 0) == 0);  // reported optimum
}

TEST_CASE("relabel_mask matches the exhaustive per-pixel rule") {
  Rng rng(40);
  for (int trial = 0; trial < 20; ++trial) {
    const BinaryMask prev = oracle::random_mask(16, 16, rng);
    const BinaryMask body = oracle::random_mask(16, 16, rng, 0.7);
    const PlaneX<Real> p = random_attention(16, 16, rng);
    const double t = rng.uniform(0.05, 0.9);
    const BinaryMask out = relabel_mask(prev, p, body, t);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        std::uint8_t want;
        if (!body.values(y, x)) {
          want = prev.values(y, x);
        } else {
          want = (prev.values(y, x) * p(y, x) > t) ? 1 : 0;
        }
        CHECK(out.values(y, x) == want);
      }
    }
  }
}

TEST_CASE("relabel_mask properties: shrinkage, monotonicity in t, idempotence") {
  Rng rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const BinaryMask prev = oracle::random_mask(16, 16, rng);
    const BinaryMask body = oracle::random_mask(16, 16, rng, 0.6);
    const PlaneX<Real> p = random_attention(16, 16, rng);
    const double t1 = rng.uniform(0.05, 0.5);
    const double t2 = t1 + rng.uniform(0.05, 0.4);

    const BinaryMask lo = relabel_mask(prev, p, body, t1);
    const BinaryMask hi = relabel_mask(prev, p, body, t2);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        CHECK(hi.values(y, x) <= lo.values(y, x));  // positive set shrinks in t
        if (body.values(y, x)) {
          CHECK(lo.values(y, x) <= prev.values(y, x));  // never creates skin
        } else {
          CHECK(lo.values(y, x) == prev.values(y, x));  // untouched outside
        }
      }
    }
    const BinaryMask again = relabel_mask(lo, p, body, t1);
    CHECK((again.values.array() == lo.values.array()).all());
  }
}

TEST_CASE("first_drop_index implements the stop rule") {
  CHECK(first_drop_index({0.80, 0.83, 0.85, 0.84}) == 3);  // stop after round 4
  CHECK(first_drop_index({0.80, 0.83, 0.85}) == -1);
  CHECK(first_drop_index({0.9, 0.1}) == 1);
  CHECK(first_drop_index({}) == -1);
}

TEST_CASE("run_recursive_training: journal, generations, rollback") {
  const auto dir = std::filesystem::temp_directory_path() / "skinseg_relabel_smoke";
  std::filesystem::remove_all(dir);

  const auto data_dir = dir / "data";
  SynthDatasetOptions synth_opts;
  synth_opts.num = 10;
  synth_opts.size = 64;
  synth_opts.noise_iou_target = 0.75;
  synth_opts.seed = 13;
  write_synth_dataset(data_dir, synth_opts);

  MaskProviderConfig pc;
  pc.backend = MaskProviderConfig::Backend::file;
  pc.masks_dir = data_dir / "train" / "parts";
  const LoadedDataset train = load_samples(load_dataset(data_dir, Split::train),
                                           *make_mask_provider(pc));
  pc.masks_dir = data_dir / "val" / "parts";
  const LoadedDataset val =
      load_samples(load_dataset(data_dir, Split::val), *make_mask_provider(pc));

  ModelConfig mc;
  mc.input_size = 64;
  mc.base_filters = 4;
  mc.interaction_filters = {4, 4, 4};
  mc.expansion_factor = 2;
  mc.decoder_filters = {8, 8, 8};
  mc.reduction_ratio = 2;
  mc.seed = 3;
  Model model(mc);
  Adam adam;

  RelabelSchedule schedule;
  schedule.warmup_rounds = 1;
  schedule.epochs_per_round = 1;
  schedule.max_rounds = 2;
  schedule.final_epochs = 1;
  LossConfig loss_cfg;
  TrainSchedule sched;
  sched.batch_size = 4;

  const auto run_dir = dir / "run";
  const RelabelState state = run_recursive_training(model, adam, train, val, schedule, loss_cfg,
                                                    sched, run_dir, 123);

  CHECK(state.stopped);
  CHECK(state.current_t == doctest::Approx(schedule.t0 + schedule.t_step * state.round_index));
  CHECK(state.label_generations.size() == static_cast<std::size_t>(state.round_index) + 1);
  CHECK(!state.final_generation.empty());
  CHECK(state.validation_history.size() >= 1);
  CHECK(state.validation_history.front().first == 0);

  // generation 0 is the pristine noisy labels
  for (const auto& s : train.samples) {
    const BinaryMask gen0 = read_binary_mask(run_dir / "labels_gen0" / (s.stem + ".png"));
    CHECK((gen0.values.array() == s.label.values.array()).all());
  }

  // every persisted generation reloads and only ever shrinks inside the body
  for (int k = 1; k <= state.round_index; ++k) {
    for (const auto& s : train.samples) {
      const BinaryMask prev = read_binary_mask(
          run_dir / ("labels_gen" + std::to_string(k - 1)) / (s.stem + ".png"));
      const BinaryMask cur =
          read_binary_mask(run_dir / ("labels_gen" + std::to_string(k)) / (s.stem + ".png"));
      const BinaryMask body = derive_body_mask(s.parts);
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          if (body.values(y, x)) {
            CHECK(cur.values(y, x) <= prev.values(y, x));
          } else {
            CHECK(cur.values(y, x) == prev.values(y, x));
          }
        }
      }
    }
  }

  // journal records the t schedule
  std::ifstream journal(run_dir / "relabel_state.log");
  REQUIRE(journal.good());
  std::string line;
  std::vector<double> ts;
  while (std::getline(journal, line)) {
    const auto pos = line.find(" t=");
    if (pos == std::string::npos || line.rfind("round=", 0) != 0) continue;
    if (line.find("note=warmup") != std::string::npos) continue;
    ts.push_back(std::stod(line.substr(pos + 3)));
  }
  REQUIRE(ts.size() == static_cast<std::size_t>(state.round_index));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(ts[i] == doctest::Approx(0.2 + 0.05 * static_cast<double>(i)));
  }
}
