#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "brainseg/architectures.hpp"
#include "brainseg/data_ingest.hpp"
#include "brainseg/evaluation.hpp"
#include "brainseg/preprocess.hpp"
#include "brainseg/training.hpp"

namespace brainseg {

inline constexpr const char* kVersion = "0.1.0";
/// Environment variable consulted when no dataset directory is given.
inline constexpr const char* kDatasetEnv = "BRAINSEG_DATA";

/// Every setting of one experiment. Serialized as a flat `key = value` file
/// (see to_ini) that the CLI reads back with --config.
struct RunConfig {
  std::filesystem::path dataset_dir;
  std::filesystem::path output_dir = "runs";
  std::string run_name = "default";

  PreprocessConfig preprocess;
  ModelConfig model;
  TrainConfig train;
  EvaluationConfig evaluation;

  SplitRatios ratios;
  std::uint64_t split_seed = kDefaultSplitSeed;
  bool patient_level = false;
  /// Use only the first N slices (by index) of the dataset.
  std::optional<std::size_t> subset;

  std::filesystem::path run_dir() const { return output_dir / run_name; }
  std::filesystem::path checkpoint_dir() const { return run_dir() / "checkpoint"; }

  /// Validates every part against its own invariants and their agreement
  /// (model input size equals preprocessing size). Throws Error.
  void validate() const;
};

/// Flat key list, one `key = value` per line, in a fixed order.
std::string to_ini(const RunConfig& cfg);

/// Digest of the dataset directory listing: file names and sizes of the
/// `<index>.mat` files, limited to the first `subset` slices when given.
std::string dataset_digest(const std::filesystem::path& dir,
                           std::optional<std::size_t> subset = std::nullopt);

/// Writes `<command>_record.json` into cfg.run_dir(): configuration, seeds,
/// dataset digest and tool version. With update_config the flat
/// `run_config.ini` is rewritten as well; `--config run_config.ini` repeats
/// the experiment.
void write_run_record(const RunConfig& cfg, const std::string& command,
                      const std::string& data_digest, bool update_config = true);

}  // namespace brainseg
