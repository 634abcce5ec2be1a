#pragma once

#include <cstdint>
#include <span>

#include "brainseg/grid.hpp"

namespace brainseg {

inline constexpr double kDefaultSmooth = 1.0;
/// Predictions are clipped into [eps, 1 - eps] before the BCE logarithms.
inline constexpr double kBceEpsilon = 1e-7;

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct LossValue {
  double bce = 0.0;
  double dice_loss = 0.0;
  double total = 0.0;
};

ConfusionCounts confusion_counts(const Mask& pred, const Mask& truth);

/// (2 tp + smooth) / (2 tp + fp + fn + smooth). With smooth == 0 and no
/// positives anywhere the two masks agree and the result is 1.
double dice_from_counts(const ConfusionCounts& counts, double smooth = kDefaultSmooth);

/// Hard Dice overlap of two binary masks.
double dice_coefficient(const Mask& pred, const Mask& truth, double smooth = kDefaultSmooth);

/// 1 - soft Dice, where the intersection is sum(pred * truth) and the
/// cardinalities are sum(pred) + sum(truth). pred must lie in [0, 1].
double dice_loss(const Grid<double>& pred, const Mask& truth, double smooth = kDefaultSmooth);

/// Mean binary cross entropy over all pixels.
double bce_loss(const Grid<double>& pred, const Mask& truth);

/// bce + dice loss.
LossValue combined_loss(const Grid<double>& pred, const Mask& truth,
                        double smooth = kDefaultSmooth);

/// d(combined_loss)/d(pred), element-wise.
Grid<double> combined_loss_gradient(const Grid<double>& pred, const Mask& truth,
                                    double smooth = kDefaultSmooth);

// Flat-buffer forms used by training and evaluation. truth holds 0/1 floats.

LossValue combined_loss(std::span<const float> pred, std::span<const float> truth,
                        double smooth = kDefaultSmooth);
void combined_loss_gradient(std::span<const float> pred, std::span<const float> truth,
                            double smooth, std::span<float> grad);
ConfusionCounts confusion_counts(std::span<const float> prob, std::span<const float> truth,
                                 double threshold);

}  // namespace brainseg
