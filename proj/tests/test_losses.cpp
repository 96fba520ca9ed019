#include <doctest.h>

#include "oracles.hpp"
#include "skinseg/losses.hpp"

using namespace skinseg;

namespace {

PlaneX<double> random_prob(int h, int w, Rng& rng, double lo = 0.05, double hi = 0.95) {
  PlaneX<double> p(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) p(y, x) = rng.uniform(lo, hi);
  }
  return p;
}

}  // namespace

TEST_CASE("dice_loss: perfect overlap costs (almost) nothing") {
  Rng rng(20);
  const BinaryMask gt = oracle::random_mask(1024, 1024, rng, 0.4);
  const PlaneX<double> pred = gt.values.cast<double>();
  CHECK(dice_loss(pred, gt, 1.0) <= 1e-6);
  CHECK(dice_loss(pred, gt, 1e-12) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dice_loss: disjoint prediction costs ~1") {
  BinaryMask gt;
  gt.values.resize(4, 4);
  gt.values.setZero();
  gt.values(0, 0) = gt.values(1, 1) = 1;
  const PlaneX<double> pred = (1 - gt.values.cast<int>().array()).cast<double>();
  const double smooth = 1.0;
  const double total = pred.sum() + 2.0;  // Σpred + Σgt
  CHECK(dice_loss(pred, gt, smooth) == doctest::Approx(1.0 - smooth / (total + smooth)));
}

TEST_CASE("dice_loss: 2x2 hand-computed case") {
  BinaryMask gt;
  gt.values.resize(2, 2);
  gt.values << 1, 0, 0, 0;
  PlaneX<double> pred(2, 2);
  pred << 1.0, 0.5, 0.0, 0.0;
  // 1 - 2·1/(1.5 + 1) = 0.2 as smooth→0
  CHECK(dice_loss(pred, gt, 1e-15) == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("focal_loss: gamma = 0, alpha = 0.5 halves binary cross-entropy") {
  Rng rng(21);
  const BinaryMask gt = oracle::random_mask(8, 8, rng);
  const PlaneX<double> pred = random_prob(8, 8, rng);
  double bce = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = pred(i / 8, i % 8);
    bce += flat(gt.values)(i) ? -std::log(p) : -std::log(1.0 - p);
  }
  bce /= static_cast<double>(pred.size());
  CHECK(focal_loss(pred, gt, 0.0, 0.5) == doctest::Approx(0.5 * bce).epsilon(1e-12));
}

TEST_CASE("focal_loss: vanishes as predictions approach the labels") {
  BinaryMask gt;
  gt.values.resize(2, 2);
  gt.values << 1, 0, 1, 0;
  PlaneX<double> pred(2, 2);
  pred << 1.0 - 1e-9, 1e-9, 1.0 - 1e-9, 1e-9;
  CHECK(focal_loss(pred, gt, 2.0, 0.25) < 1e-8);
}

TEST_CASE("focal_loss: single-pixel scalar arithmetic") {
  BinaryMask gt;
  gt.values.resize(1, 1);
  gt.values << 1;
  PlaneX<double> pred(1, 1);
  pred << 0.9;
  // 0.25 · (0.1)² · (−ln 0.9) ≈ 2.634e-4
  CHECK(focal_loss(pred, gt, 2.0, 0.25) == doctest::Approx(2.634e-4).epsilon(1e-3));
  CHECK(focal_loss(pred, gt, 2.0, 0.25) ==
        doctest::Approx(0.25 * 0.01 * -std::log(0.9)).epsilon(1e-12));
}

TEST_CASE("combined_loss: projections and additivity") {
  Rng rng(22);
  const BinaryMask gt = oracle::random_mask(6, 6, rng);
  const PlaneX<double> pred = random_prob(6, 6, rng);
  LossConfig cfg;
  cfg.dice_weight = 1.0;
  cfg.focal_weight = 0.0;
  CHECK(combined_loss(pred, gt, cfg) ==
        doctest::Approx(dice_loss(pred, gt, cfg.dice_smooth)).epsilon(1e-12));
  cfg.dice_weight = 0.0;
  cfg.focal_weight = 1.0;
  CHECK(combined_loss(pred, gt, cfg) ==
        doctest::Approx(focal_loss(pred, gt, cfg.focal_gamma, cfg.focal_alpha)).epsilon(1e-12));
  cfg.dice_weight = 1.0;
  CHECK(combined_loss(pred, gt, cfg) ==
        doctest::Approx(dice_loss(pred, gt, cfg.dice_smooth) +
                        focal_loss(pred, gt, cfg.focal_gamma, cfg.focal_alpha))
            .epsilon(1e-12));
}

TEST_CASE("loss gradients agree with finite differences") {
  Rng rng(23);
  const BinaryMask gt = oracle::random_mask(8, 8, rng);
  PlaneX<double> pred = random_prob(8, 8, rng, 0.1, 0.9);

  SUBCASE("dice") {
    auto eval = [&]() { return dice_loss(pred, gt, 1.0); };
    const PlaneX<double> grad = dice_loss_grad(pred, gt, 1.0);
    CHECK(oracle::check_gradient(eval, pred.data(), grad.data(), pred.size()).max_rel_err <
          1e-5);
  }
  SUBCASE("focal") {
    auto eval = [&]() { return focal_loss(pred, gt, 2.0, 0.25); };
    const PlaneX<double> grad = focal_loss_grad(pred, gt, 2.0, 0.25);
    CHECK(oracle::check_gradient(eval, pred.data(), grad.data(), pred.size()).max_rel_err <
          1e-5);
  }
  SUBCASE("combined") {
    LossConfig cfg;
    auto eval = [&]() { return combined_loss(pred, gt, cfg); };
    const PlaneX<double> grad = combined_loss_grad(pred, gt, cfg);
    CHECK(oracle::check_gradient(eval, pred.data(), grad.data(), pred.size()).max_rel_err <
          1e-5);
  }
}

TEST_CASE("confusion: trivial identities and a brute-force scan") {
  Rng rng(24);
  const BinaryMask gt = oracle::random_mask(16, 16, rng);
  ConfusionCounts same = confusion(gt, gt);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);

  BinaryMask inv;
  inv.values = (1 - gt.values.cast<int>().array()).cast<std::uint8_t>();
  ConfusionCounts opp = confusion(inv, gt);
  CHECK(opp.tp == 0);
  CHECK(opp.tn == 0);

  const BinaryMask pred = oracle::random_mask(16, 16, rng);
  const ConfusionCounts got = confusion(pred, gt);
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const bool p = pred.values(y, x), g = gt.values(y, x);
      tp += p && g;
      fp += p && !g;
      tn += !p && !g;
      fn += !p && g;
    }
  }
  CHECK(got.tp == tp);
  CHECK(got.fp == fp);
  CHECK(got.tn == tn);
  CHECK(got.fn == fn);
}

TEST_CASE("metrics: perfect predictions score 1.0 across the board") {
  Rng rng(25);
  std::vector<ConfusionCounts> per_image;
  for (int i = 0; i < 3; ++i) {
    const BinaryMask gt = oracle::random_mask(8, 8, rng);
    per_image.push_back(confusion(gt, gt));
  }
  const Metrics m = compute_metrics(per_image);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.cdr == 1.0);
  CHECK(m.dsc == 1.0);
  CHECK(m.iou == 1.0);
}

TEST_CASE("metrics: Table-1-scale arithmetic sanity") {
  std::vector<ConfusionCounts> counts{{88, 12, 886, 14}};
  const Metrics m = compute_metrics(counts);
  CHECK(m.precision == doctest::Approx(0.88));
  CHECK(m.recall == doctest::Approx(88.0 / 102.0));
  CHECK(m.cdr == doctest::Approx(0.974));
}

TEST_CASE("metrics: per-image DSC differs from aggregated F1") {
  // image A: perfect 10-positive prediction; image B: dice 6/12 = 0.5
  ConfusionCounts a{10, 0, 90, 0};
  ConfusionCounts b{3, 2, 91, 4};
  const std::vector<ConfusionCounts> counts{a, b};
  const Metrics m = compute_metrics(counts);
  CHECK(m.dsc == doctest::Approx(0.75));
  const double p = 13.0 / 15.0, r = 13.0 / 17.0;
  CHECK(m.f1 == doctest::Approx(2 * p * r / (p + r)));
  CHECK(m.f1 != doctest::Approx(m.dsc));
}

TEST_CASE("metrics: f1 between precision and recall; IoU <= Dice") {
  Rng rng(26);
  for (int trial = 0; trial < 30; ++trial) {
    const BinaryMask gt = oracle::random_mask(16, 16, rng, rng.uniform(0.1, 0.9));
    const BinaryMask pred = oracle::random_mask(16, 16, rng, rng.uniform(0.1, 0.9));
    const std::vector<ConfusionCounts> counts{confusion(pred, gt)};
    const Metrics m = compute_metrics(counts);
    CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-12);
    CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-12);
    CHECK(m.iou <= m.dsc + 1e-12);
  }
}

TEST_CASE("dice loss and per-image DSC are complementary for binary predictions") {
  Rng rng(27);
  const BinaryMask gt = oracle::random_mask(16, 16, rng, 0.4);
  const BinaryMask pred = oracle::random_mask(16, 16, rng, 0.4);
  const PlaneX<double> pred_real = pred.values.cast<double>();
  const double loss = dice_loss(pred_real, gt, 1e-12);
  const std::vector<ConfusionCounts> counts{confusion(pred, gt)};
  const Metrics m = compute_metrics(counts);
  CHECK(loss + m.dsc == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("zero-denominator conventions") {
  // no predictions, no positives: vacuously perfect
  std::vector<ConfusionCounts> empty{{0, 0, 100, 0}};
  const Metrics m0 = compute_metrics(empty);
  CHECK(m0.precision == 1.0);
  CHECK(m0.recall == 1.0);
  CHECK(m0.iou == 1.0);
  CHECK(m0.dsc == 1.0);

  // no predictions but positives exist: precision collapses to 0
  std::vector<ConfusionCounts> missed{{0, 0, 90, 10}};
  const Metrics m1 = compute_metrics(missed);
  CHECK(m1.precision == 0.0);
  CHECK(m1.recall == 0.0);
}
