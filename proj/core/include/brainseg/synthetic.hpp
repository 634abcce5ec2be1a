#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "brainseg/data_ingest.hpp"

namespace brainseg {

/// Parameters of the synthetic T1-like slice generator. Slices show a head
/// ellipse with a bright skull rim and one bright tumor ellipse whose
/// placement depends on the tumor type.
struct SyntheticOptions {
  std::size_t count = 32;
  std::uint64_t seed = 7;
  std::size_t side = kSliceSide;
  /// Gaussian noise standard deviation in scanner units. Zero gives slices
  /// that compress to a few kilobytes, which is what the full-size replica uses.
  double noise_sd = 25.0;
  /// Explicit label counts; by default labels follow the published
  /// 708:1426:930 proportions.
  std::optional<LabelHistogram> labels;
  /// Number of distinct patients; by default count * 233 / 3064, at least 1.
  std::optional<std::size_t> patients;
};

/// Label sequence for `count` slices: explicit counts or published proportions,
/// deterministically shuffled by seed.
std::vector<TumorType> synthetic_labels(const SyntheticOptions& options);

SliceRecord synthesize_slice(int index, TumorType label, const std::string& patient_id,
                             std::size_t side, double noise_sd, std::uint64_t seed);

std::vector<SliceRecord> synthesize_dataset(const SyntheticOptions& options);

/// Writes a record as `<dir>/<index>.mat` in the published container layout.
std::filesystem::path write_slice(const std::filesystem::path& dir, const SliceRecord& record);

/// Generates and writes slices one at a time; returns the label histogram.
LabelHistogram write_synthetic_dataset(const std::filesystem::path& dir,
                                       const SyntheticOptions& options);

}  // namespace brainseg
