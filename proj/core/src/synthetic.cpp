#include "brainseg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "brainseg/error.hpp"
#include "brainseg/mat_file.hpp"
#include "brainseg/rng.hpp"

namespace brainseg {
namespace fs = std::filesystem;

std::vector<TumorType> synthetic_labels(const SyntheticOptions& options) {
  const std::size_t n = options.count;
  LabelHistogram h;
  if (options.labels) {
    h = *options.labels;
    if (h.total() != n) throw Error(ErrorCode::InvalidConfig, "label counts must sum to count");
  } else {
    // Largest-remainder apportionment of the published 708:1426:930 mix.
    const std::array<double, 3> share{708.0 / 3064.0, 1426.0 / 3064.0, 930.0 / 3064.0};
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t used = 0;
    for (int k = 0; k < 3; ++k) {
      const double exact = share[k] * static_cast<double>(n);
      counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      rem[k] = exact - static_cast<double>(counts[k]);
      used += counts[k];
    }
    while (used < n) {
      const auto k = static_cast<std::size_t>(std::max_element(rem.begin(), rem.end()) - rem.begin());
      ++counts[k];
      rem[k] = -1.0;
      ++used;
    }
    h = {counts[0], counts[1], counts[2]};
  }
  std::vector<TumorType> labels;
  labels.reserve(n);
  labels.insert(labels.end(), h.meningioma, TumorType::Meningioma);
  labels.insert(labels.end(), h.glioma, TumorType::Glioma);
  labels.insert(labels.end(), h.pituitary, TumorType::Pituitary);
  Rng rng(options.seed ^ 0x5eedULL);
  rng.shuffle(std::span<TumorType>(labels));
  return labels;
}

SliceRecord synthesize_slice(int index, TumorType label, const std::string& patient_id,
                             std::size_t side, double noise_sd, std::uint64_t seed) {
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(index));
  const double s = static_cast<double>(side);

  const double head_r0 = s * 0.5, head_c0 = s * rng.uniform(0.47, 0.53);
  const double head_a = s * rng.uniform(0.36, 0.42), head_b = s * rng.uniform(0.30, 0.38);
  const double tissue = rng.uniform(250.0, 400.0);

  // Tumor placement by type, in head-normalized coordinates.
  double tu = 0.0, tv = 0.0;
  switch (label) {
    case TumorType::Meningioma: {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double radius = rng.uniform(0.55, 0.7);
      tu = radius * std::sin(angle);
      tv = radius * std::cos(angle);
      break;
    }
    case TumorType::Glioma:
      tu = rng.uniform(-0.45, 0.45);
      tv = rng.uniform(-0.45, 0.45);
      break;
    case TumorType::Pituitary:
      tu = rng.uniform(0.05, 0.25);
      tv = rng.uniform(-0.1, 0.1);
      break;
  }
  const double t_r0 = head_r0 + tu * head_a, t_c0 = head_c0 + tv * head_b;
  const double t_a = s * rng.uniform(0.04, 0.11), t_b = s * rng.uniform(0.04, 0.11);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double contrast = rng.uniform(1.6, 2.2);

  SliceRecord rec;
  rec.index = index;
  rec.label = label;
  rec.patient_id = patient_id;
  rec.image = Image(side, side);
  rec.mask = Mask(side, side);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double y = (static_cast<double>(r) + 0.5 - head_r0) / head_a;
      const double x = (static_cast<double>(c) + 0.5 - head_c0) / head_b;
      const double head = x * x + y * y;
      double v = 0.0;
      if (head <= 1.0) {
        v = head > 0.82 ? 2.2 * tissue : tissue * (1.0 + 0.15 * std::cos(6.0 * x) * std::sin(5.0 * y));
        const double dr = static_cast<double>(r) + 0.5 - t_r0;
        const double dc = static_cast<double>(c) + 0.5 - t_c0;
        const double u = (ct * dr + st * dc) / t_a;
        const double w = (-st * dr + ct * dc) / t_b;
        if (u * u + w * w <= 1.0) {
          rec.mask(r, c) = 1;
          v = tissue * contrast;
        }
        if (noise_sd > 0.0) v += noise_sd * rng.normal();
      }
      rec.image(r, c) = std::clamp(std::round(v), 0.0, 32767.0);
    }
  }

  constexpr int kBorderPoints = 48;
  for (int k = 0; k < kBorderPoints; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / kBorderPoints;
    const double u = t_a * std::cos(phi), w = t_b * std::sin(phi);
    rec.tumor_border.push_back({t_c0 + st * u + ct * w, t_r0 + ct * u - st * w});
  }
  return rec;
}

namespace {

std::string patient_for(std::size_t i, std::size_t count, std::size_t patients) {
  const std::size_t p = i * patients / std::max<std::size_t>(count, 1);
  return std::to_string(100000 + p * 37);
}

std::size_t patient_count(const SyntheticOptions& options) {
  if (options.patients) return std::max<std::size_t>(*options.patients, 1);
  return std::max<std::size_t>(options.count * 233 / 3064, 1);
}

}  // namespace

std::vector<SliceRecord> synthesize_dataset(const SyntheticOptions& options) {
  const auto labels = synthetic_labels(options);
  const std::size_t patients = patient_count(options);
  std::vector<SliceRecord> out;
  out.reserve(options.count);
  for (std::size_t i = 0; i < options.count; ++i) {
    out.push_back(synthesize_slice(static_cast<int>(i + 1), labels[i],
                                   patient_for(i, options.count, patients), options.side,
                                   options.noise_sd, options.seed));
  }
  return out;
}

fs::path write_slice(const fs::path& dir, const SliceRecord& record) {
  const fs::path path = dir / (std::to_string(record.index) + ".mat");
  mat::Writer w(path);
  w.create_struct("/cjdata");

  const std::size_t rows = record.image.rows(), cols = record.image.cols();
  std::vector<double> image(rows * cols), mask(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      image[r + c * rows] = record.image(r, c);
      mask[r + c * rows] = record.mask(r, c);
    }
  }
  const std::array<std::size_t, 2> dims{rows, cols};
  w.write("/cjdata/image", dims, image, mat::StorageType::Int16, "int16", true);
  w.write("/cjdata/tumorMask", dims, mask, mat::StorageType::UInt8, "logical", true);

  const std::array<std::size_t, 2> scalar{1, 1};
  const std::array<double, 1> label{static_cast<double>(static_cast<int>(record.label))};
  w.write("/cjdata/label", scalar, label, mat::StorageType::Double, "double");
  w.write_string("/cjdata/PID", record.patient_id);

  std::vector<double> border;
  for (const auto& p : record.tumor_border) {
    border.push_back(p[0]);
    border.push_back(p[1]);
  }
  const std::array<std::size_t, 2> bdims{border.size(), 1};
  w.write("/cjdata/tumorBorder", bdims, border, mat::StorageType::Double, "double");
  w.close();
  return path;
}

LabelHistogram write_synthetic_dataset(const fs::path& dir, const SyntheticOptions& options) {
  fs::create_directories(dir);
  const auto labels = synthetic_labels(options);
  const std::size_t patients = patient_count(options);
  LabelHistogram h;
  for (std::size_t i = 0; i < options.count; ++i) {
    const auto rec = synthesize_slice(static_cast<int>(i + 1), labels[i],
                                      patient_for(i, options.count, patients), options.side,
                                      options.noise_sd, options.seed);
    write_slice(dir, rec);
    h.add(rec.label);
  }
  return h;
}

}  // namespace brainseg
