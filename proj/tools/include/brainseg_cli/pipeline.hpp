#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "brainseg/run_config.hpp"

namespace brainseg::cli {

struct SliceFile {
  int index = 0;
  std::filesystem::path path;
};

/// `<index>.mat` files of the configured dataset in index order, cut to the
/// configured subset.
std::vector<SliceFile> dataset_files(const RunConfig& cfg);

DatasetSplit compute_split(const RunConfig& cfg, std::span<const SliceFile> files);

/// `<run>/split.txt` if it exists and agrees with cfg; otherwise a fresh split
/// that is written there. A disagreeing manifest is an InvalidConfig error
/// unless `replace` is set.
DatasetSplit ensure_split(const RunConfig& cfg, bool replace, std::ostream& log);

struct PartitionExamples {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
};

struct Parts {
  bool train = false, val = false, test = false;
};

/// Streams the dataset once and preprocesses the requested partitions.
PartitionExamples load_partitions(const RunConfig& cfg, const DatasetSplit& split, Parts parts,
                                  std::ostream& log);

/// Loads the records with the given indices, in the given order.
std::vector<SliceRecord> load_records(const RunConfig& cfg, std::span<const int> indices);

}  // namespace brainseg::cli
