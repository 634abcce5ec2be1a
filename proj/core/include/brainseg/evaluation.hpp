#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "brainseg/architectures.hpp"
#include "brainseg/data_ingest.hpp"
#include "brainseg/metrics.hpp"
#include "brainseg/png_io.hpp"
#include "brainseg/preprocess.hpp"

namespace brainseg {

enum class DiceAggregation { PerImage, Pooled };

std::string to_string(DiceAggregation a);
DiceAggregation parse_aggregation(const std::string& name);

struct EvaluationConfig {
  double threshold = 0.5;
  double smooth = kDefaultSmooth;
  /// Which Dice the comparison table shows; the report carries both.
  DiceAggregation aggregation = DiceAggregation::PerImage;
  /// Also score bilinearly upsampled predictions against the original masks.
  bool native_resolution = false;
  std::size_t batch_size = 8;
};

struct EvaluationReport {
  std::string variant;
  std::size_t epochs = 0;
  std::size_t n_test = 0;
  double mean_loss = 0.0;
  /// 100 * mean of per_image_dice.
  double mean_dice_percent = 0.0;
  /// 100 * Dice of the confusion counts summed over all test pixels.
  double pooled_dice_percent = 0.0;
  std::optional<double> native_dice_percent;
  std::vector<double> per_image_dice;
  std::vector<int> indices;
  double threshold = 0.5;
  std::size_t resolution = 0;
  DiceAggregation aggregation = DiceAggregation::PerImage;

  /// The Dice value shown in tables, per `aggregation`.
  double table_dice_percent() const;
};

/// Element-wise prob >= threshold. threshold must lie in (0, 1).
Mask threshold_probabilities(const Grid<float>& prob, double threshold);

/// Runs the model on one preprocessed S x S image and thresholds it.
Mask predict_mask(const Model& model, const Image& image, double threshold = 0.5);

/// Scores probability maps against the examples' targets. probabilities[i]
/// must have the shape of examples[i].target.
EvaluationReport evaluate_predictions(std::span<const Tensor> probabilities,
                                      std::span<const Example> examples,
                                      const EvaluationConfig& cfg);

EvaluationReport evaluate(const Model& model, std::span<const Example> test,
                          const EvaluationConfig& cfg);

/// Preprocesses the records itself; with cfg.native_resolution the
/// predictions are also compared with the original full-size masks.
EvaluationReport evaluate(const Model& model, std::span<const SliceRecord> test,
                          const PreprocessConfig& pre, const EvaluationConfig& cfg);

/// Three panels left to right: input slice, ground-truth overlay,
/// prediction overlay, separated by a 2-pixel white gutter.
RgbImage compose_comparison(const Image& image, const Mask& truth, const Mask& pred);
void render_comparison(const Image& image, const Mask& truth, const Mask& pred,
                       const std::filesystem::path& out_path);

/// Deterministic figure name: `<variant>_<index>.png`.
std::string figure_name(const std::string& variant, int index);

struct ComparisonTable {
  std::string text;  // aligned plain-text table
  std::string csv;
  std::string json;
};

/// Model | Epochs | Loss | Dice Score, one row per report.
ComparisonTable generate_table(std::span<const EvaluationReport> reports);

/// Writes `<variant>_report.txt` (key/value) and `<variant>_report.json`.
void write_report(const std::filesystem::path& dir, const EvaluationReport& report);
EvaluationReport read_report_json(const std::filesystem::path& path);

}  // namespace brainseg
