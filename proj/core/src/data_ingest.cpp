#include "brainseg/data_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "brainseg/error.hpp"
#include "brainseg/text.hpp"
#include "brainseg/mat_file.hpp"
#include "brainseg/rng.hpp"

namespace brainseg {
namespace fs = std::filesystem;

namespace {

std::optional<int> index_from_filename(const fs::path& path) {
  if (path.extension() != ".mat") return std::nullopt;
  const std::string stem = path.stem().string();
  int value = 0;
  const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), value);
  if (ec != std::errc() || ptr != stem.data() + stem.size() || value < 1) return std::nullopt;
  return value;
}

void require_square_slice(const mat::Array& a, const fs::path& path, const char* what) {
  if (a.dims.size() != 2 || a.dims[0] != kSliceSide || a.dims[1] != kSliceSide) {
    std::ostringstream msg;
    msg << path.string() << ": " << what << " is ";
    for (std::size_t i = 0; i < a.dims.size(); ++i) msg << (i ? "x" : "") << a.dims[i];
    msg << ", expected " << kSliceSide << "x" << kSliceSide;
    throw Error(ErrorCode::ShapeMismatch, msg.str());
  }
}

}  // namespace

std::string to_string(TumorType type) {
  switch (type) {
    case TumorType::Meningioma: return "meningioma";
    case TumorType::Glioma: return "glioma";
    case TumorType::Pituitary: return "pituitary";
  }
  return "unknown";
}

void LabelHistogram::add(TumorType type) {
  switch (type) {
    case TumorType::Meningioma: ++meningioma; break;
    case TumorType::Glioma: ++glioma; break;
    case TumorType::Pituitary: ++pituitary; break;
  }
}

LabelHistogram label_histogram(std::span<const SliceRecord> records) {
  LabelHistogram h;
  for (const auto& r : records) h.add(r.label);
  return h;
}

SliceRecord load_slice(const fs::path& path) {
  const mat::Reader reader(path);

  const mat::Array image = reader.read("/cjdata/image");
  const mat::Array mask = reader.read("/cjdata/tumorMask");
  const mat::Array label = reader.read("/cjdata/label");
  require_square_slice(image, path, "image");
  require_square_slice(mask, path, "tumorMask");

  SliceRecord rec;
  rec.index = index_from_filename(path).value_or(0);

  if (label.numel() != 1) {
    throw Error(ErrorCode::LabelOutOfRange, path.string() + ": label is not a scalar");
  }
  const double l = label.values[0];
  if (l != 1.0 && l != 2.0 && l != 3.0) {
    std::ostringstream msg;
    msg << path.string() << ": label " << l << " not in {1,2,3}";
    throw Error(ErrorCode::LabelOutOfRange, msg.str());
  }
  rec.label = static_cast<TumorType>(static_cast<int>(l));
  rec.patient_id = reader.read_string("/cjdata/PID");

  // Column-major storage; transpose into row-major grids.
  rec.image = Image(kSliceSide, kSliceSide);
  rec.mask = Mask(kSliceSide, kSliceSide);
  for (std::size_t c = 0; c < kSliceSide; ++c) {
    for (std::size_t r = 0; r < kSliceSide; ++r) {
      rec.image(r, c) = image.at(r, c);
      rec.mask(r, c) = mask.at(r, c) != 0.0 ? 1 : 0;
    }
  }

  if (reader.has("/cjdata/tumorBorder")) {
    const mat::Array border = reader.read("/cjdata/tumorBorder");
    for (std::size_t i = 0; i + 1 < border.numel(); i += 2) {
      rec.tumor_border.push_back({border.values[i], border.values[i + 1]});
    }
  }
  return rec;
}

std::vector<fs::path> list_slice_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::EmptyDirectory, dir.string() + ": not a directory");
  }
  std::vector<std::pair<int, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (auto idx = index_from_filename(entry.path())) found.emplace_back(*idx, entry.path());
  }
  if (found.empty()) {
    throw Error(ErrorCode::EmptyDirectory, dir.string() + ": no <index>.mat files");
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  out.reserve(found.size());
  for (auto& [idx, p] : found) out.push_back(std::move(p));
  return out;
}

void for_each_slice(const fs::path& dir, const std::function<void(SliceRecord&&)>& visit) {
  for (const auto& path : list_slice_files(dir)) {
    // load_slice errors already name the file.
    visit(load_slice(path));
  }
}

std::vector<SliceRecord> load_dataset(const fs::path& dir) {
  std::vector<SliceRecord> records;
  for_each_slice(dir, [&](SliceRecord&& r) { records.push_back(std::move(r)); });
  return records;
}

SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    std::ostringstream msg;
    msg << "ratios " << ratios.train << ":" << ratios.val << ":" << ratios.test
        << " do not sum to 1";
    throw Error(ErrorCode::BadRatios, msg.str());
  }
  // The small tolerance absorbs representation error such as 0.1 * 10.
  const double dn = static_cast<double>(n);
  SplitSizes s;
  s.train = static_cast<std::size_t>(std::floor(ratios.train * dn + 1e-9));
  s.val = static_cast<std::size_t>(std::ceil(ratios.val * dn - 1e-9));
  s.train = std::min(s.train, n);
  s.val = std::min(s.val, n - s.train);
  s.test = n - s.train - s.val;
  return s;
}

DatasetSplit split_indices(std::span<const int> indices, const SplitRatios& ratios,
                           std::uint64_t seed) {
  if (indices.empty()) throw Error(ErrorCode::EmptyInput, "cannot split an empty record list");
  const SplitSizes sizes = split_sizes(indices.size(), ratios);

  std::vector<int> order(indices.begin(), indices.end());
  Rng rng(seed);
  rng.shuffle(std::span<int>(order));

  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;
  split.train.assign(order.begin(), order.begin() + sizes.train);
  split.val.assign(order.begin() + sizes.train, order.begin() + sizes.train + sizes.val);
  split.test.assign(order.begin() + sizes.train + sizes.val, order.end());
  return split;
}

DatasetSplit split_dataset(std::span<const int> indices, std::span<const std::string> patients,
                           const SplitRatios& ratios, std::uint64_t seed, bool patient_level) {
  if (indices.empty()) throw Error(ErrorCode::EmptyInput, "cannot split an empty record list");
  if (!patient_level) return split_indices(indices, ratios, seed);
  if (patients.size() != indices.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one patient id per index required");
  }

  const SplitSizes target = split_sizes(indices.size(), ratios);
  std::map<std::string, std::vector<int>> groups;
  for (std::size_t i = 0; i < indices.size(); ++i) groups[patients[i]].push_back(indices[i]);
  std::vector<const std::vector<int>*> order;
  for (const auto& [pid, members] : groups) order.push_back(&members);
  Rng rng(seed);
  rng.shuffle(std::span<const std::vector<int>*>(order));

  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;
  split.patient_level = true;
  for (const auto* members : order) {
    auto& dest = split.train.size() < target.train                 ? split.train
                 : split.val.size() < target.val                   ? split.val
                                                                   : split.test;
    dest.insert(dest.end(), members->begin(), members->end());
  }
  return split;
}

DatasetSplit split_dataset(std::span<const SliceRecord> records, const SplitRatios& ratios,
                           std::uint64_t seed, bool patient_level) {
  std::vector<int> indices;
  std::vector<std::string> patients;
  indices.reserve(records.size());
  patients.reserve(records.size());
  for (const auto& r : records) {
    indices.push_back(r.index);
    patients.push_back(r.patient_id);
  }
  return split_dataset(indices, patients, ratios, seed, patient_level);
}

namespace {

void write_list(std::ostream& out, const char* key, const std::vector<int>& values) {
  out << key << " =";
  for (int v : values) out << ' ' << v;
  out << '\n';
}

}  // namespace

void write_split_manifest(const fs::path& path, const DatasetSplit& split) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::UnwritablePath, path.string());
  out << "# brainseg split manifest\n";
  out << "seed = " << split.seed << '\n';
  out << "ratios = " << format_real(split.ratios.train) << ' ' << format_real(split.ratios.val)
      << ' ' << format_real(split.ratios.test) << '\n';
  out << "patient_level = " << (split.patient_level ? "true" : "false") << '\n';
  out << "n_train = " << split.train.size() << '\n';
  out << "n_val = " << split.val.size() << '\n';
  out << "n_test = " << split.test.size() << '\n';
  write_list(out, "train", split.train);
  write_list(out, "val", split.val);
  write_list(out, "test", split.test);
  if (!out) throw Error(ErrorCode::UnwritablePath, path.string());
}

DatasetSplit read_split_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingField, path.string() + ": cannot open split manifest");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  for (const char* key : {"seed", "ratios", "train", "val", "test"}) {
    if (!kv.contains(key)) {
      throw Error(ErrorCode::MissingField, path.string() + ": missing key '" + key + "'");
    }
  }
  auto ints = [](const std::string& s) {
    std::vector<int> v;
    std::istringstream is(s);
    int x;
    while (is >> x) v.push_back(x);
    return v;
  };
  DatasetSplit split;
  split.seed = std::stoull(kv["seed"]);
  std::istringstream rs(kv["ratios"]);
  rs >> split.ratios.train >> split.ratios.val >> split.ratios.test;
  split.patient_level = kv["patient_level"] == "true";
  split.train = ints(kv["train"]);
  split.val = ints(kv["val"]);
  split.test = ints(kv["test"]);
  return split;
}

}  // namespace brainseg
