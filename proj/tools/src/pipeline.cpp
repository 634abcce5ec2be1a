#include "brainseg_cli/pipeline.hpp"

#include <cmath>
#include <ostream>
#include <unordered_map>

#include "brainseg/error.hpp"
#include "brainseg/mat_file.hpp"

namespace brainseg::cli {
namespace fs = std::filesystem;

std::vector<SliceFile> dataset_files(const RunConfig& cfg) {
  std::vector<SliceFile> out;
  for (const auto& p : list_slice_files(cfg.dataset_dir)) {
    if (cfg.subset && out.size() >= *cfg.subset) break;
    out.push_back({std::stoi(p.stem().string()), p});
  }
  return out;
}

DatasetSplit compute_split(const RunConfig& cfg, std::span<const SliceFile> files) {
  std::vector<int> indices;
  std::vector<std::string> patients;
  for (const auto& f : files) {
    indices.push_back(f.index);
    if (cfg.patient_level) patients.push_back(mat::Reader(f.path).read_string("/cjdata/PID"));
  }
  if (!cfg.patient_level) return split_indices(indices, cfg.ratios, cfg.split_seed);
  return split_dataset(indices, patients, cfg.ratios, cfg.split_seed, true);
}

namespace {

bool agrees(const DatasetSplit& s, const RunConfig& cfg, std::size_t n) {
  auto close = [](double a, double b) { return std::abs(a - b) < 1e-12; };
  return s.seed == cfg.split_seed && s.patient_level == cfg.patient_level &&
         close(s.ratios.train, cfg.ratios.train) && close(s.ratios.val, cfg.ratios.val) &&
         close(s.ratios.test, cfg.ratios.test) &&
         s.train.size() + s.val.size() + s.test.size() == n;
}

}  // namespace

DatasetSplit ensure_split(const RunConfig& cfg, bool replace, std::ostream& log) {
  const fs::path manifest = cfg.run_dir() / "split.txt";
  const auto files = dataset_files(cfg);
  if (fs::exists(manifest)) {
    DatasetSplit existing = read_split_manifest(manifest);
    if (agrees(existing, cfg, files.size())) return existing;
    if (!replace) {
      throw Error(ErrorCode::InvalidConfig,
                  manifest.string() + " was made with other split settings; rerun with --force");
    }
  }
  DatasetSplit split = compute_split(cfg, files);
  fs::create_directories(cfg.run_dir());
  write_split_manifest(manifest, split);
  log << "split: train " << split.train.size() << ", val " << split.val.size() << ", test "
      << split.test.size() << " -> " << manifest.string() << '\n';
  return split;
}

PartitionExamples load_partitions(const RunConfig& cfg, const DatasetSplit& split, Parts parts,
                                  std::ostream& log) {
  std::unordered_map<int, std::vector<Example>*> target;
  PartitionExamples out;
  if (parts.train) for (int i : split.train) target[i] = &out.train;
  if (parts.val) for (int i : split.val) target[i] = &out.val;
  if (parts.test) for (int i : split.test) target[i] = &out.test;

  std::size_t loaded = 0;
  for (const auto& f : dataset_files(cfg)) {
    const auto it = target.find(f.index);
    if (it == target.end()) continue;
    it->second->push_back(make_example(load_slice(f.path), cfg.preprocess));
    if (++loaded % 500 == 0) log << "  loaded " << loaded << " / " << target.size() << " slices\n";
  }
  if (loaded != target.size()) {
    throw Error(ErrorCode::MissingField, "split references " + std::to_string(target.size()) +
                                             " slices but only " + std::to_string(loaded) +
                                             " were found in " + cfg.dataset_dir.string());
  }
  return out;
}

std::vector<SliceRecord> load_records(const RunConfig& cfg, std::span<const int> indices) {
  std::unordered_map<int, fs::path> by_index;
  for (const auto& f : dataset_files(cfg)) by_index[f.index] = f.path;
  std::vector<SliceRecord> out;
  for (int i : indices) {
    const auto it = by_index.find(i);
    if (it == by_index.end()) {
      throw Error(ErrorCode::MissingField, "slice " + std::to_string(i) + " is not in the dataset");
    }
    out.push_back(load_slice(it->second));
  }
  return out;
}

}  // namespace brainseg::cli
