#include "brainseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "brainseg/error.hpp"

namespace brainseg {
namespace {

template <typename A, typename B>
void require_same_size(const A& a, const B& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " elements");
  }
}

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::ShapeMismatch,
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

template <typename T>
void require_binary(std::span<const T> values, const char* what) {
  for (T v : values) {
    if (v != T(0) && v != T(1)) {
      throw Error(ErrorCode::NonBinaryInput, std::string(what) + " has a value outside {0,1}");
    }
  }
}

template <typename P>
void require_unit_range(std::span<const P> pred) {
  for (P v : pred) {
    if (!(v >= P(0) && v <= P(1))) {
      throw Error(ErrorCode::OutOfRangePrediction, "prediction outside [0,1]");
    }
  }
}

struct SoftDiceSums {
  double intersection = 0.0;
  double cardinality = 0.0;  // sum(pred) + sum(truth)
};

template <typename P, typename T>
SoftDiceSums soft_dice_sums(std::span<const P> pred, std::span<const T> truth) {
  SoftDiceSums s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i], t = truth[i];
    s.intersection += p * t;
    s.cardinality += p + t;
  }
  return s;
}

double soft_dice(const SoftDiceSums& s, double smooth) {
  const double denom = s.cardinality + smooth;
  if (denom == 0.0) return 1.0;
  return (2.0 * s.intersection + smooth) / denom;
}

double clip(double p) { return std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon); }

template <typename P, typename T>
double bce(std::span<const P> pred, std::span<const T> truth) {
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = clip(pred[i]), y = truth[i];
    sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(pred.size());
}

template <typename P, typename T>
LossValue combined(std::span<const P> pred, std::span<const T> truth, double smooth) {
  LossValue v;
  v.bce = bce(pred, truth);
  v.dice_loss = 1.0 - soft_dice(soft_dice_sums(pred, truth), smooth);
  v.total = v.bce + v.dice_loss;
  return v;
}

template <typename P, typename T, typename G>
void combined_gradient(std::span<const P> pred, std::span<const T> truth, double smooth,
                       std::span<G> grad) {
  const auto m = static_cast<double>(pred.size());
  const SoftDiceSums s = soft_dice_sums(pred, truth);
  const double denom = s.cardinality + smooth;
  const double numer = 2.0 * s.intersection + smooth;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i], y = truth[i];
    double g = 0.0;
    // The clip is flat outside [eps, 1 - eps].
    if (p > kBceEpsilon && p < 1.0 - kBceEpsilon) g = (-y / p + (1.0 - y) / (1.0 - p)) / m;
    if (denom != 0.0) g -= (2.0 * y * denom - numer) / (denom * denom);
    grad[i] = static_cast<G>(g);
  }
}

}  // namespace

ConfusionCounts confusion_counts(const Mask& pred, const Mask& truth) {
  require_same_shape(pred, truth);
  require_binary(pred.values(), "prediction");
  require_binary(truth.values(), "truth");
  ConfusionCounts c;
  auto p = pred.values();
  auto t = truth.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]) {
      t[i] ? ++c.tp : ++c.fp;
    } else {
      t[i] ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

double dice_from_counts(const ConfusionCounts& c, double smooth) {
  if (smooth < 0.0) throw Error(ErrorCode::InvalidConfig, "smooth must be >= 0");
  const double numer = 2.0 * static_cast<double>(c.tp) + smooth;
  const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn) + smooth;
  if (denom == 0.0) return 1.0;
  return numer / denom;
}

double dice_coefficient(const Mask& pred, const Mask& truth, double smooth) {
  return dice_from_counts(confusion_counts(pred, truth), smooth);
}

double dice_loss(const Grid<double>& pred, const Mask& truth, double smooth) {
  require_same_shape(pred, truth);
  require_unit_range(pred.values());
  require_binary(truth.values(), "truth");
  return 1.0 - soft_dice(soft_dice_sums(pred.values(), truth.values()), smooth);
}

double bce_loss(const Grid<double>& pred, const Mask& truth) {
  require_same_shape(pred, truth);
  require_binary(truth.values(), "truth");
  return bce(pred.values(), truth.values());
}

LossValue combined_loss(const Grid<double>& pred, const Mask& truth, double smooth) {
  require_same_shape(pred, truth);
  require_unit_range(pred.values());
  require_binary(truth.values(), "truth");
  return combined(pred.values(), truth.values(), smooth);
}

Grid<double> combined_loss_gradient(const Grid<double>& pred, const Mask& truth, double smooth) {
  require_same_shape(pred, truth);
  require_binary(truth.values(), "truth");
  Grid<double> grad(pred.rows(), pred.cols());
  combined_gradient(pred.values(), truth.values(), smooth, grad.values());
  return grad;
}

LossValue combined_loss(std::span<const float> pred, std::span<const float> truth,
                        double smooth) {
  require_same_size(pred, truth);
  return combined(pred, truth, smooth);
}

void combined_loss_gradient(std::span<const float> pred, std::span<const float> truth,
                            double smooth, std::span<float> grad) {
  require_same_size(pred, truth);
  require_same_size(pred, grad);
  combined_gradient(pred, truth, smooth, grad);
}

ConfusionCounts confusion_counts(std::span<const float> prob, std::span<const float> truth,
                                 double threshold) {
  require_same_size(prob, truth);
  ConfusionCounts c;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const bool p = prob[i] >= threshold;
    const bool t = truth[i] != 0.0f;
    if (p) {
      t ? ++c.tp : ++c.fp;
    } else {
      t ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

}  // namespace brainseg
