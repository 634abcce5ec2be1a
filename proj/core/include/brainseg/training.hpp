#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "brainseg/adam.hpp"
#include "brainseg/architectures.hpp"
#include "brainseg/data_ingest.hpp"
#include "brainseg/preprocess.hpp"
#include "brainseg/rng.hpp"

namespace brainseg {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  std::uint64_t seed = 42;
  /// Empty disables checkpointing.
  std::filesystem::path checkpoint_dir;
  PreprocessConfig preprocess;
  /// Seeded shuffles and deterministic kernels. The CPU kernels here are
  /// deterministic in either mode; the flag is recorded so runs state it.
  bool deterministic = false;
  double smooth = 1.0;
  double threshold = 0.5;
  /// Optional cap on optimizer steps; the epoch in progress is closed early.
  std::optional<std::size_t> max_steps;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation data
  double val_dice = 0.0;  // mean per-image hard Dice in [0, 1], NaN without validation data
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
};

/// Preprocessed training and validation examples.
struct TrainingData {
  std::vector<Example> train;
  std::vector<Example> val;
};

TrainingData prepare_training_data(std::span<const SliceRecord> records,
                                   const DatasetSplit& split, const PreprocessConfig& cfg);

/// Digest over every setting a resumed run must share with its checkpoint:
/// architecture, preprocessing, optimizer and loss hyperparameters.
std::string config_digest(const ModelConfig& model, const TrainConfig& train);

/// JSON form of both configs, as embedded in checkpoints and run records.
std::string configs_to_json(const ModelConfig& model, const TrainConfig& train);
std::pair<ModelConfig, TrainConfig> configs_from_json(const std::string& text);

/// Everything needed to continue a run exactly where it stopped.
struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::string digest;
  std::vector<Tensor> parameters;
  std::uint64_t adam_steps = 0;
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;
  std::size_t completed_epochs = 0;
  std::string rng_state;
  TrainingHistory history;
  double best_val_dice = -1.0;
  std::size_t best_epoch = 0;
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ck);
/// Throws CorruptCheckpoint on any structural problem, MissingCheckpoint if absent.
Checkpoint load_checkpoint(const std::filesystem::path& file);
/// Rebuilds the model and copies the saved parameters into it.
Model restore_model(const Checkpoint& ck);

/// File names inside a checkpoint directory.
namespace checkpoint_files {
inline constexpr const char* kLatest = "latest.ckpt";
inline constexpr const char* kBest = "best.ckpt";
inline constexpr const char* kManifest = "manifest.txt";
inline constexpr const char* kHistory = "history.jsonl";
inline constexpr const char* kSummary = "model_summary.txt";
}  // namespace checkpoint_files

/// Mini-batch Adam on the combined BCE + soft-Dice loss, with a checkpoint
/// written at the end of every epoch.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);
  /// Continues from a checkpoint: parameters, optimizer moments and step
  /// count, RNG state and history are restored.
  Trainer(Model& model, const Checkpoint& ck);

  /// Runs `epochs` more epochs and returns the full history so far.
  const TrainingHistory& run(const TrainingData& data, std::size_t epochs);

  Checkpoint snapshot() const;
  const TrainingHistory& history() const noexcept { return history_; }
  std::size_t completed_epochs() const noexcept { return history_.epochs.size(); }
  std::uint64_t steps() const noexcept { return adam_.steps(); }
  const TrainConfig& config() const noexcept { return cfg_; }

  std::function<void(const EpochRecord&)> on_epoch;

 private:
  void check_data(const TrainingData& data) const;
  EpochRecord run_epoch(const TrainingData& data);
  void write_checkpoints(const EpochRecord& rec);

  Model& model_;
  TrainConfig cfg_;
  Adam adam_;
  Rng rng_;
  TrainingHistory history_;
  double best_val_dice_ = -1.0;
  std::size_t best_epoch_ = 0;
};

/// Trains a fresh model for cfg.epochs epochs.
TrainingHistory train(Model& model, const TrainingData& data, const TrainConfig& cfg);
TrainingHistory train(Model& model, std::span<const SliceRecord> records,
                      const DatasetSplit& split, const TrainConfig& cfg);

/// Loads `<dir>/latest.ckpt`, verifies its digest against `expected` when
/// given (DigestMismatch), and trains `extra_epochs` more epochs.
std::pair<Model, TrainingHistory> resume(const std::filesystem::path& checkpoint_dir,
                                         const TrainingData& data, std::size_t extra_epochs,
                                         const std::optional<std::pair<ModelConfig, TrainConfig>>&
                                             expected = std::nullopt);

/// Mean per-image combined loss and hard Dice of a model over examples.
struct BatchMetrics {
  double mean_loss = 0.0;
  double mean_dice = 0.0;
};
BatchMetrics measure(const Model& model, std::span<const Example> examples,
                     std::size_t batch_size, double smooth, double threshold);

}  // namespace brainseg
