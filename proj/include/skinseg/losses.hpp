#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "skinseg/types.hpp"

namespace skinseg {

struct LossConfig {
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double dice_smooth = 1.0;
  double dice_weight = 1.0;
  double focal_weight = 1.0;

  void validate() const {
    if (focal_gamma < 0) throw ConfigError("focal_gamma must be >= 0");
    if (focal_alpha <= 0 || focal_alpha >= 1) throw ConfigError("focal_alpha must be in (0,1)");
    if (dice_smooth <= 0) throw ConfigError("dice_smooth must be > 0");
    if (dice_weight < 0 || focal_weight < 0) throw ConfigError("loss weights must be >= 0");
    if (dice_weight + focal_weight <= 0) throw ConfigError("at least one loss weight must be positive");
  }
};

namespace detail {
template <class S>
void check_dims(const PlaneX<S>& pred, const BinaryMask& gt, const char* who) {
  require(pred.rows() == gt.values.rows() && pred.cols() == gt.values.cols(), who);
}
}  // namespace detail

/// Soft Dice loss: 1 - (2·Σ p·g + s) / (Σp + Σg + s).
template <class S>
S dice_loss(const PlaneX<S>& pred, const BinaryMask& gt, S smooth) {
  detail::check_dims(pred, gt, "dice_loss: shape mismatch");
  const auto g = gt.values.template cast<S>();
  const S inter = (pred.array() * g.array()).sum();
  const S denom = pred.sum() + g.sum() + smooth;
  return S(1) - (S(2) * inter + smooth) / denom;
}

template <class S>
PlaneX<S> dice_loss_grad(const PlaneX<S>& pred, const BinaryMask& gt, S smooth) {
  detail::check_dims(pred, gt, "dice_loss: shape mismatch");
  const auto g = gt.values.template cast<S>();
  const S inter = (pred.array() * g.array()).sum();
  const S denom = pred.sum() + g.sum() + smooth;
  const S num = S(2) * inter + smooth;
  // d/dp [ -num/denom ] = -(2g·denom - num) / denom²
  return ((num - S(2) * denom * g.array()) / (denom * denom)).matrix();
}

inline constexpr double kFocalClip = 1e-7;

/// Binary focal loss, mean over pixels: -alpha_t (1-p_t)^gamma log(p_t) with
/// p_t = p for positives, 1-p for negatives; alpha on positives, (1-alpha)
/// on negatives. Predictions are clipped to [eps, 1-eps].
template <class S>
S focal_loss(const PlaneX<S>& pred, const BinaryMask& gt, S gamma, S alpha) {
  detail::check_dims(pred, gt, "focal_loss: shape mismatch");
  const Eigen::Index n = pred.size();
  S total = S(0);
  const S eps = S(kFocalClip);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S p = std::clamp(pred(i), eps, S(1) - eps);
    const bool pos = flat(gt.values)(i) != 0;
    const S pt = pos ? p : S(1) - p;
    const S at = pos ? alpha : S(1) - alpha;
    total += -at * std::pow(S(1) - pt, gamma) * std::log(pt);
  }
  return total / S(n);
}

template <class S>
PlaneX<S> focal_loss_grad(const PlaneX<S>& pred, const BinaryMask& gt, S gamma, S alpha) {
  detail::check_dims(pred, gt, "focal_loss: shape mismatch");
  PlaneX<S> out(pred.rows(), pred.cols());
  const Eigen::Index n = pred.size();
  const S eps = S(kFocalClip);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S raw = pred(i);
    if (raw <= eps || raw >= S(1) - eps) {
      out(i) = S(0);  // clipped region: flat
      continue;
    }
    const bool pos = flat(gt.values)(i) != 0;
    const S p = raw;
    S d;
    if (pos) {
      // d/dp [ -a (1-p)^g ln p ]
      d = -alpha * std::pow(S(1) - p, gamma) / p;
      if (gamma != S(0)) d += alpha * gamma * std::pow(S(1) - p, gamma - S(1)) * std::log(p);
    } else {
      // d/dp [ -(1-a) p^g ln(1-p) ]
      d = (S(1) - alpha) * std::pow(p, gamma) / (S(1) - p);
      if (gamma != S(0)) d += -(S(1) - alpha) * gamma * std::pow(p, gamma - S(1)) * std::log(S(1) - p);
    }
    out(i) = d / S(n);
  }
  return out;
}

template <class S>
S combined_loss(const PlaneX<S>& pred, const BinaryMask& gt, const LossConfig& cfg) {
  S loss = S(0);
  if (cfg.dice_weight > 0) loss += S(cfg.dice_weight) * dice_loss(pred, gt, S(cfg.dice_smooth));
  if (cfg.focal_weight > 0)
    loss += S(cfg.focal_weight) * focal_loss(pred, gt, S(cfg.focal_gamma), S(cfg.focal_alpha));
  return loss;
}

template <class S>
PlaneX<S> combined_loss_grad(const PlaneX<S>& pred, const BinaryMask& gt, const LossConfig& cfg) {
  PlaneX<S> g = PlaneX<S>::Zero(pred.rows(), pred.cols());
  if (cfg.dice_weight > 0)
    g += S(cfg.dice_weight) * dice_loss_grad(pred, gt, S(cfg.dice_smooth));
  if (cfg.focal_weight > 0)
    g += S(cfg.focal_weight) * focal_loss_grad(pred, gt, S(cfg.focal_gamma), S(cfg.focal_alpha));
  return g;
}

// ---------------------------------------------------------------------------
// Evaluation metrics
// ---------------------------------------------------------------------------

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
};

inline ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  require(pred.values.rows() == gt.values.rows() && pred.values.cols() == gt.values.cols(),
          "confusion: shape mismatch");
  ConfusionCounts c;
  const auto p = flat(pred.values);
  const auto g = flat(gt.values);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) != 0) {
      (g(i) != 0 ? c.tp : c.fp)++;
    } else {
      (g(i) != 0 ? c.fn : c.tn)++;
    }
  }
  return c;
}

template <class S>
BinaryMask binarize(const PlaneX<S>& prob, S threshold = S(0.5)) {
  BinaryMask out;
  out.values = (prob.array() > threshold).template cast<std::uint8_t>();
  return out;
}

struct Metrics {
  double precision = 0, recall = 0, f1 = 0, cdr = 0, dsc = 0, iou = 0;
};

/// Zero-denominator convention: the metric is 1.0 when the corresponding
/// error count is also zero (a vacuously perfect prediction), else 0.0.
inline double ratio_or(double num, double denom, std::int64_t err_when_empty) {
  if (denom > 0) return num / denom;
  return err_when_empty == 0 ? 1.0 : 0.0;
}

/// Precision/recall/F1/CDR/IoU come from dataset-aggregated counts; DSC is
/// the mean of per-image Dice scores (the only reading under which both DSC
/// and F1 are worth reporting).
inline Metrics compute_metrics(std::span<const ConfusionCounts> per_image) {
  ConfusionCounts agg;
  double dsc_sum = 0.0;
  for (const auto& c : per_image) {
    agg += c;
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    dsc_sum += denom > 0 ? (2.0 * static_cast<double>(c.tp)) / denom : 1.0;
  }
  Metrics m;
  m.precision = ratio_or(static_cast<double>(agg.tp), static_cast<double>(agg.tp + agg.fp), agg.fn);
  m.recall = ratio_or(static_cast<double>(agg.tp), static_cast<double>(agg.tp + agg.fn), agg.fp);
  m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.cdr = agg.total() > 0 ? static_cast<double>(agg.tp + agg.tn) / static_cast<double>(agg.total()) : 1.0;
  m.dsc = per_image.empty() ? 1.0 : dsc_sum / static_cast<double>(per_image.size());
  m.iou = ratio_or(static_cast<double>(agg.tp), static_cast<double>(agg.tp + agg.fp + agg.fn), 0);
  return m;
}

inline double metric_iou(const BinaryMask& a, const BinaryMask& b) {
  const ConfusionCounts c = confusion(a, b);
  return ratio_or(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fn), 0);
}

}  // namespace skinseg
