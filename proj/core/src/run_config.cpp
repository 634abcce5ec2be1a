#include "brainseg/run_config.hpp"

#include <fstream>
#include <sstream>

#include <Eigen/Core>
#include <json.hpp>

#include "brainseg/digest.hpp"
#include "brainseg/mat_file.hpp"
#include "brainseg/png_io.hpp"
#include "brainseg/text.hpp"
#include "brainseg/error.hpp"

namespace brainseg {
namespace fs = std::filesystem;

void RunConfig::validate() const {
  preprocess.validate();
  model.validate();
  train.validate();
  split_sizes(1, ratios);
  if (model.input_size != preprocess.target_size) {
    throw Error(ErrorCode::InvalidConfig, "model input_size " + std::to_string(model.input_size) +
                                              " != preprocessing size " +
                                              std::to_string(preprocess.target_size));
  }
  if (train.preprocess.target_size != preprocess.target_size) {
    throw Error(ErrorCode::InvalidConfig, "training and run preprocessing sizes differ");
  }
  if (!(evaluation.threshold > 0.0 && evaluation.threshold < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "threshold must lie in (0,1)");
  }
  if (subset && *subset == 0) throw Error(ErrorCode::InvalidConfig, "subset must be >= 1");
  if (run_name.empty() || run_name.find('/') != std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "run name must be a non-empty single path component");
  }
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "# brainseg run configuration\n"
    << "data = \"" << c.dataset_dir.string() << "\"\n"
    << "out = \"" << c.output_dir.string() << "\"\n"
    << "run = \"" << c.run_name << "\"\n"
    << "variant = \"" << to_string(c.model.variant) << "\"\n"
    << "size = " << c.preprocess.target_size << '\n'
    << "normalize = \"" << to_string(c.preprocess.normalize) << "\"\n"
    << "base_channels = " << c.model.base_channels << '\n'
    << "depth = " << c.model.depth << '\n'
    << "out_channels = " << c.model.out_channels << '\n'
    << "init_seed = " << c.model.init_seed << '\n'
    << "learning_rate = " << format_real(c.train.learning_rate) << '\n'
    << "epochs = " << c.train.epochs << '\n'
    << "batch_size = " << c.train.batch_size << '\n'
    << "seed = " << c.train.seed << '\n'
    << "deterministic = " << b(c.train.deterministic) << '\n'
    << "smooth = " << format_real(c.train.smooth) << '\n'
    << "threshold = " << format_real(c.evaluation.threshold) << '\n'
    << "aggregation = \"" << to_string(c.evaluation.aggregation) << "\"\n"
    << "native_resolution = " << b(c.evaluation.native_resolution) << '\n'
    << "split_seed = " << c.split_seed << '\n'
    << "train_ratio = " << format_real(c.ratios.train) << '\n'
    << "val_ratio = " << format_real(c.ratios.val) << '\n'
    << "test_ratio = " << format_real(c.ratios.test) << '\n'
    << "patient_level = " << b(c.patient_level) << '\n';
  if (c.subset) o << "subset = " << *c.subset << '\n';
  if (c.train.max_steps) o << "max_steps = " << *c.train.max_steps << '\n';
  return o.str();
}

std::string dataset_digest(const fs::path& dir, std::optional<std::size_t> subset) {
  Fnv1a h;
  std::size_t n = 0;
  for (const auto& p : list_slice_files(dir)) {
    if (subset && n >= *subset) break;
    h.update(p.filename().string());
    h.update(":" + std::to_string(fs::file_size(p)) + ";");
    ++n;
  }
  return h.hex();
}

void write_run_record(const RunConfig& cfg, const std::string& command,
                      const std::string& data_digest, bool update_config) {
  const fs::path dir = cfg.run_dir();
  fs::create_directories(dir);
  if (update_config) {
    std::ofstream ini(dir / "run_config.ini");
    ini << to_ini(cfg);
    if (!ini) throw Error(ErrorCode::UnwritablePath, (dir / "run_config.ini").string());
  }
  nlohmann::json record = {
      {"command", command},
      {"version", kVersion},
      {"libraries", {{"hdf5", mat::hdf5_version()},
                     {"libpng", png_version()},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                   std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)}}},
      {"dataset_dir", cfg.dataset_dir.string()},
      {"dataset_digest", data_digest},
      {"split_seed", cfg.split_seed},
      {"train_seed", cfg.train.seed},
      {"init_seed", cfg.model.init_seed},
      {"config_digest", config_digest(cfg.model, cfg.train)},
      {"configs", nlohmann::json::parse(configs_to_json(cfg.model, cfg.train))},
      {"config_file", "run_config.ini"}};
  const fs::path file = dir / (command + "_record.json");
  std::ofstream out(file);
  out << record.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::UnwritablePath, file.string());
}

}  // namespace brainseg
