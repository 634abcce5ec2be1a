#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "brainseg/grid.hpp"

namespace brainseg {

inline constexpr std::size_t kSliceSide = 512;
inline constexpr std::size_t kPublishedSliceCount = 3064;

enum class TumorType : int { Meningioma = 1, Glioma = 2, Pituitary = 3 };

std::string to_string(TumorType type);

/// One T1 slice with its tumor annotation, as stored in `<index>.mat`.
struct SliceRecord {
  int index = 0;
  Image image;  // raw scanner intensities, kSliceSide x kSliceSide
  Mask mask;    // 1 = tumor pixel
  TumorType label = TumorType::Meningioma;
  std::string patient_id;
  /// Border points in stored order: (first, second) coordinate pairs.
  std::vector<std::array<double, 2>> tumor_border;
};

struct LabelHistogram {
  std::size_t meningioma = 0;
  std::size_t glioma = 0;
  std::size_t pituitary = 0;

  std::size_t total() const noexcept { return meningioma + glioma + pituitary; }
  void add(TumorType type);
  friend bool operator==(const LabelHistogram&, const LabelHistogram&) = default;
};

LabelHistogram label_histogram(std::span<const SliceRecord> records);

/// Reads one dataset file. The container holds a `cjdata` struct with
/// `image`, `tumorMask`, `label`, `PID` and optionally `tumorBorder`.
SliceRecord load_slice(const std::filesystem::path& path);

/// `<index>.mat` files of a dataset directory, ordered by index.
std::vector<std::filesystem::path> list_slice_files(const std::filesystem::path& dir);

/// Streams every slice of a directory in index order. Per-file errors are
/// rethrown with the offending filename in the message.
void for_each_slice(const std::filesystem::path& dir,
                    const std::function<void(SliceRecord&&)>& visit);

/// Loads a whole directory into memory, sorted by index. A full 3064-slice
/// dataset needs roughly 7 GB; prefer for_each_slice for large runs.
std::vector<SliceRecord> load_dataset(const std::filesystem::path& dir);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

/// train = floor(r.train * n), val = ceil(r.val * n), test = remainder.
SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios);

inline constexpr std::uint64_t kDefaultSplitSeed = 42;

/// Partition of record indices into train/val/test.
struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  std::uint64_t seed = kDefaultSplitSeed;
  SplitRatios ratios;
  bool patient_level = false;

  friend bool operator==(const DatasetSplit& a, const DatasetSplit& b) {
    return a.train == b.train && a.val == b.val && a.test == b.test && a.seed == b.seed &&
           a.patient_level == b.patient_level;
  }
};

/// Seeded uniform shuffle of the given indices, cut at split_sizes().
DatasetSplit split_indices(std::span<const int> indices, const SplitRatios& ratios,
                           std::uint64_t seed);

/// Slice-level split by default. With patient_level set, whole patients are
/// shuffled and assigned so no patient spans two partitions; the sizes are
/// then only approximately those of split_sizes().
DatasetSplit split_dataset(std::span<const SliceRecord> records, const SplitRatios& ratios,
                           std::uint64_t seed, bool patient_level = false);

/// Same as split_dataset but from (index, patient id) pairs, so callers that
/// stream the dataset need not keep the images.
DatasetSplit split_dataset(std::span<const int> indices, std::span<const std::string> patients,
                           const SplitRatios& ratios, std::uint64_t seed, bool patient_level);

void write_split_manifest(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_split_manifest(const std::filesystem::path& path);

}  // namespace brainseg
