#include "brainseg_cli/app.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include <CLI11.hpp>

#include "brainseg/error.hpp"
#include "brainseg/evaluation.hpp"
#include "brainseg/synthetic.hpp"
#include "brainseg_cli/pipeline.hpp"
#include "brainseg_cli/settings.hpp"

namespace brainseg::cli {
namespace {

namespace fs = std::filesystem;

// One run setting exposed as a flag. The key doubles as the config-file name.
struct SettingOption {
  const char* key;
  const char* flag;
  const char* help;
  const char* group;
};

const SettingOption kValueOptions[] = {
    {"data", "--data", "dataset directory of <index>.mat files (default $BRAINSEG_DATA)", "Run"},
    {"out", "--out", "output root; artifacts go to <out>/<run>/ (default runs)", "Run"},
    {"run", "--run", "run name (default default)", "Run"},
    {"subset", "--subset", "use only the first N slices by index", "Run"},
    {"variant", "--variant", "unet | unet_skip | mnet (default unet)", "Model"},
    {"size", "--size", "working resolution: 64, 128, 256 or 512 (default 256)", "Model"},
    {"normalize", "--normalize", "intensity normalization (default minmax)", "Model"},
    {"base_channels", "--base-channels", "channels of the first level (default 64)", "Model"},
    {"depth", "--depth", "number of pooling levels (default 4)", "Model"},
    {"out_channels", "--out-channels", "output channels (default 1)", "Model"},
    {"init_seed", "--init-seed", "weight initialization seed (default 1)", "Model"},
    {"learning_rate", "--learning-rate", "Adam learning rate (default 1e-4)", "Training"},
    {"epochs", "--epochs", "epochs to train; for resume, epochs to add (default 50)", "Training"},
    {"batch_size", "--batch-size", "mini-batch size (default 8)", "Training"},
    {"seed", "--seed", "shuffling seed (default 42)", "Training"},
    {"smooth", "--smooth", "Dice smoothing term (default 1)", "Training"},
    {"max_steps", "--max-steps", "stop after this many optimizer steps", "Training"},
    {"threshold", "--threshold", "probability threshold for hard masks (default 0.5)", "Evaluation"},
    {"aggregation", "--aggregation", "per_image | pooled Dice in tables (default per_image)",
     "Evaluation"},
    {"split_seed", "--split-seed", "split shuffling seed (default 42)", "Split"},
    {"train_ratio", "--train-ratio", "training fraction (default 0.8)", "Split"},
    {"val_ratio", "--val-ratio", "validation fraction (default 0.1)", "Split"},
    {"test_ratio", "--test-ratio", "test fraction (default 0.1)", "Split"},
};

const SettingOption kFlagOptions[] = {
    {"deterministic", "--deterministic,!--no-deterministic", "record the run as deterministic",
     "Training"},
    {"native_resolution", "--native-resolution,!--no-native-resolution",
     "also score predictions upsampled to the original 512x512 masks", "Evaluation"},
    {"patient_level", "--patient-level,!--no-patient-level",
     "keep all slices of a patient in one partition", "Split"},
};

class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int main(int argc, const char* const* argv);

 private:
  void declare(CLI::App& app);
  Settings explicit_settings() const;
  RunConfig resolve(Settings settings, bool from_stored_run) const;
  void require_dataset(const RunConfig& cfg) const;
  void check_fresh(const fs::path& path) const;

  int cmd_synth();
  int cmd_verify();
  int cmd_split();
  int cmd_train();
  int cmd_resume();
  int cmd_evaluate();
  int cmd_predict();
  int cmd_report();

  std::ostream& out_;
  std::ostream& err_;

  std::string config_file_;
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> flags_;
  std::map<std::string, CLI::Option*> options_;
  bool force_ = false;

  // synth
  std::string synth_dir_;
  std::size_t synth_count_ = 32;
  std::uint64_t synth_seed_ = 7;
  std::size_t synth_side_ = kSliceSide;
  double synth_noise_ = 25.0;
  bool synth_replica_ = false;
  // verify
  bool allow_partial_ = false;
  // evaluate / predict / report
  std::string weights_ = "latest";
  std::vector<int> predict_indices_;
  std::size_t predict_count_ = 3;
  std::vector<std::string> report_runs_;
};

void Cli::declare(CLI::App& app) {
  app.add_option("--config", config_file_, "flat key = value file; flags override its values")
      ->group("Run");
  for (const auto& o : kValueOptions) {
    options_[o.key] = app.add_option(o.flag, values_[o.key], o.help)->group(o.group);
  }
  for (const auto& o : kFlagOptions) {
    options_[o.key] = app.add_flag(o.flag, flags_[o.key], o.help)->group(o.group);
  }
}

Settings Cli::explicit_settings() const {
  Settings file;
  if (!config_file_.empty()) file = read_settings_file(config_file_);
  Settings flags;
  for (const auto& o : kValueOptions) {
    if (options_.at(o.key)->count() > 0) flags[o.key] = values_.at(o.key);
  }
  for (const auto& o : kFlagOptions) {
    if (options_.at(o.key)->count() > 0) flags[o.key] = flags_.at(o.key) ? "true" : "false";
  }
  return merge(std::move(file), flags);
}

// defaults < stored run config (for commands acting on an existing run) <
// config file < flags.
RunConfig Cli::resolve(Settings settings, bool from_stored_run) const {
  RunConfig cfg;
  Settings location;
  for (const char* k : {"out", "run"}) {
    if (settings.count(k)) location[k] = settings.at(k);
  }
  apply_settings(location, cfg);
  if (from_stored_run) {
    const fs::path stored = cfg.run_dir() / "run_config.ini";
    if (fs::exists(stored)) settings = merge(read_settings_file(stored), settings);
  }
  apply_settings(settings, cfg);
  if (cfg.dataset_dir.empty()) {
    if (const char* env = std::getenv(kDatasetEnv)) cfg.dataset_dir = env;
  }
  cfg.validate();
  return cfg;
}

void Cli::require_dataset(const RunConfig& cfg) const {
  if (cfg.dataset_dir.empty()) {
    throw Error(ErrorCode::InvalidConfig,
                std::string("no dataset directory: pass --data or set ") + kDatasetEnv);
  }
}

void Cli::check_fresh(const fs::path& path) const {
  if (fs::exists(path) && !force_) {
    throw Error(ErrorCode::OutputExists, path.string() + " exists; pass --force to overwrite");
  }
}

int Cli::cmd_synth() {
  SyntheticOptions opt;
  opt.count = synth_count_;
  opt.seed = synth_seed_;
  opt.side = synth_side_;
  opt.noise_sd = synth_noise_;
  if (synth_replica_) {
    opt.count = kPublishedSliceCount;
    opt.side = kSliceSide;
    opt.noise_sd = 0.0;
  }
  const fs::path dir = synth_dir_;
  if (fs::exists(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".mat") {
        check_fresh(dir / "1.mat");
        break;
      }
    }
  }
  fs::create_directories(dir);
  const LabelHistogram h = write_synthetic_dataset(dir, opt);
  out_ << "wrote " << h.total() << " synthetic slices to " << dir.string() << " (meningioma "
       << h.meningioma << ", glioma " << h.glioma << ", pituitary " << h.pituitary << ")\n";
  return 0;
}

int Cli::cmd_verify() {
  RunConfig cfg = resolve(explicit_settings(), false);
  require_dataset(cfg);
  const auto files = list_slice_files(cfg.dataset_dir);
  LabelHistogram hist;
  std::size_t failures = 0;
  for (const auto& f : files) {
    try {
      hist.add(load_slice(f).label);
    } catch (const Error& e) {
      ++failures;
      err_ << f.filename().string() << ": " << e.what() << '\n';
    }
  }
  out_ << "slices: " << hist.total() << '\n'
       << "meningioma: " << hist.meningioma << '\n'
       << "glioma: " << hist.glioma << '\n'
       << "pituitary: " << hist.pituitary << '\n';
  if (failures > 0) {
    err_ << failures << " of " << files.size() << " files failed to load\n";
    return kExitData;
  }
  const LabelHistogram published{708, 1426, 930};
  if (hist == published) {
    out_ << "dataset matches the published counts (3064; 708/1426/930)\n";
    return 0;
  }
  if (allow_partial_) {
    err_ << "warning: counts differ from the published 3064 (708/1426/930); accepted as partial\n";
    return 0;
  }
  err_ << "counts differ from the published 3064 (708/1426/930); pass --allow-partial to accept\n";
  return kExitMismatch;
}

int Cli::cmd_split() {
  RunConfig cfg = resolve(explicit_settings(), false);
  require_dataset(cfg);
  check_fresh(cfg.run_dir() / "split.txt");
  fs::remove(cfg.run_dir() / "split.txt");
  const DatasetSplit split = ensure_split(cfg, true, out_);
  (void)split;
  write_run_record(cfg, "split", dataset_digest(cfg.dataset_dir, cfg.subset));
  return 0;
}

void print_epoch(std::ostream& out, const EpochRecord& r, std::size_t total) {
  out << "epoch " << r.epoch << "/" << total << "  train_loss " << std::fixed
      << std::setprecision(4) << r.train_loss << "  val_loss " << r.val_loss << "  val_dice "
      << r.val_dice << std::defaultfloat << '\n'
      << std::flush;
}

int Cli::cmd_train() {
  RunConfig cfg = resolve(explicit_settings(), false);
  require_dataset(cfg);
  const fs::path ckdir = cfg.checkpoint_dir();
  check_fresh(ckdir / checkpoint_files::kLatest);
  if (force_) {
    fs::remove_all(ckdir);
    fs::remove_all(cfg.run_dir() / "report");
  }
  const DatasetSplit split = ensure_split(cfg, force_, err_);
  PartitionExamples ex = load_partitions(cfg, split, {true, true, false}, err_);
  write_run_record(cfg, "train", dataset_digest(cfg.dataset_dir, cfg.subset));

  Model model = build_model(cfg.model);
  TrainConfig tc = cfg.train;
  tc.checkpoint_dir = ckdir;
  out_ << "training " << display_name(cfg.model.variant) << " (" << model.parameter_count()
       << " parameters) on " << ex.train.size() << " slices, validating on " << ex.val.size()
       << '\n';
  Trainer trainer(model, tc);
  trainer.on_epoch = [&](const EpochRecord& r) { print_epoch(out_, r, tc.epochs); };
  trainer.run(TrainingData{std::move(ex.train), std::move(ex.val)}, tc.epochs);
  out_ << "checkpoints in " << ckdir.string() << '\n';
  return 0;
}

int Cli::cmd_resume() {
  Settings settings = explicit_settings();
  if (!settings.count("epochs")) {
    throw Error(ErrorCode::InvalidConfig, "resume needs --epochs N (epochs to add)");
  }
  Settings extra_only{{"epochs", settings.at("epochs")}};
  settings.erase("epochs");
  RunConfig extra;
  apply_settings(extra_only, extra);
  if (extra.train.epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");

  RunConfig cfg = resolve(settings, true);
  require_dataset(cfg);
  const fs::path ckdir = cfg.checkpoint_dir();
  const Checkpoint ck = load_checkpoint(ckdir / checkpoint_files::kLatest);
  const DatasetSplit split = ensure_split(cfg, false, err_);
  PartitionExamples ex = load_partitions(cfg, split, {true, true, false}, err_);
  const TrainingData data{std::move(ex.train), std::move(ex.val)};

  const std::size_t done = ck.completed_epochs;
  const std::size_t total = done + extra.train.epochs;
  out_ << "resuming " << display_name(ck.model_config.variant) << " after epoch " << done << '\n';
  auto [model, history] = resume(ckdir, data, extra.train.epochs,
                                 std::make_pair(cfg.model, cfg.train));
  for (std::size_t i = done; i < history.epochs.size(); ++i) print_epoch(out_, history.epochs[i], total);
  cfg.train.epochs = history.epochs.size();
  write_run_record(cfg, "resume", dataset_digest(cfg.dataset_dir, cfg.subset));
  return 0;
}

fs::path checkpoint_file(const RunConfig& cfg, const std::string& weights) {
  if (weights == "latest") return cfg.checkpoint_dir() / checkpoint_files::kLatest;
  if (weights == "best") return cfg.checkpoint_dir() / checkpoint_files::kBest;
  throw Error(ErrorCode::InvalidConfig, "--weights must be latest or best");
}

Checkpoint load_matching(const RunConfig& cfg, const fs::path& file) {
  Checkpoint ck = load_checkpoint(file);
  if (config_digest(cfg.model, cfg.train) != ck.digest) {
    throw Error(ErrorCode::DigestMismatch,
                "settings do not match the checkpoint in " + file.parent_path().string());
  }
  return ck;
}

int Cli::cmd_evaluate() {
  RunConfig cfg = resolve(explicit_settings(), true);
  require_dataset(cfg);
  const fs::path latest = cfg.checkpoint_dir() / checkpoint_files::kLatest;
  const Checkpoint ck = load_matching(cfg, latest);
  const fs::path report_dir = cfg.run_dir() / "report";
  const std::string variant = to_string(cfg.model.variant);
  check_fresh(report_dir / (variant + "_report.json"));

  const DatasetSplit split = ensure_split(cfg, false, err_);
  std::vector<SliceRecord> records;
  std::vector<Example> test;
  if (cfg.evaluation.native_resolution) {
    records = load_records(cfg, split.test);
  } else {
    test = load_partitions(cfg, split, {false, false, true}, err_).test;
  }

  auto score = [&](const Checkpoint& c, const fs::path& dir, const char* label) {
    const Model model = restore_model(c);
    EvaluationReport r = cfg.evaluation.native_resolution
                             ? evaluate(model, records, cfg.preprocess, cfg.evaluation)
                             : evaluate(model, test, cfg.evaluation);
    r.epochs = c.completed_epochs;
    write_report(dir, r);
    out_ << label << " weights (epoch " << c.completed_epochs << "): loss " << std::fixed
         << std::setprecision(4) << r.mean_loss << "  dice " << std::setprecision(2)
         << r.mean_dice_percent << "  pooled dice " << r.pooled_dice_percent;
    if (r.native_dice_percent) out_ << "  native dice " << *r.native_dice_percent;
    out_ << std::defaultfloat << "  (" << r.n_test << " test slices)\n";
  };
  score(ck, report_dir, "final");
  const fs::path best = cfg.checkpoint_dir() / checkpoint_files::kBest;
  if (fs::exists(best)) score(load_matching(cfg, best), report_dir / "best", "best");
  write_run_record(cfg, "evaluate", dataset_digest(cfg.dataset_dir, cfg.subset), false);
  out_ << "reports in " << report_dir.string() << '\n';
  return 0;
}

int Cli::cmd_predict() {
  RunConfig cfg = resolve(explicit_settings(), true);
  require_dataset(cfg);
  const Checkpoint ck = load_matching(cfg, checkpoint_file(cfg, weights_));
  std::vector<int> indices = predict_indices_;
  if (indices.empty()) {
    const DatasetSplit split = ensure_split(cfg, false, err_);
    const std::size_t n = std::min(predict_count_, split.test.size());
    indices.assign(split.test.begin(), split.test.begin() + static_cast<std::ptrdiff_t>(n));
  }
  const std::string variant = to_string(cfg.model.variant);
  const fs::path dir = cfg.run_dir() / "figures";
  for (int i : indices) check_fresh(dir / figure_name(variant, i));
  fs::create_directories(dir);

  const Model model = restore_model(ck);
  for (const auto& rec : load_records(cfg, indices)) {
    const Example ex = make_example(rec, cfg.preprocess);
    const std::size_t s = cfg.preprocess.target_size;
    Image image(s, s);
    Mask truth(s, s);
    for (std::size_t k = 0; k < s * s; ++k) {
      image.values()[k] = ex.input.values()[k];
      truth.values()[k] = ex.target.values()[k] > 0.5f ? 1 : 0;
    }
    const Mask pred = predict_mask(model, image, cfg.evaluation.threshold);
    const fs::path file = dir / figure_name(variant, rec.index);
    render_comparison(image, truth, pred, file);
    out_ << file.string() << "  dice " << std::fixed << std::setprecision(4)
         << dice_coefficient(pred, truth, cfg.evaluation.smooth) << std::defaultfloat << '\n';
  }
  write_run_record(cfg, "predict", dataset_digest(cfg.dataset_dir, cfg.subset), false);
  return 0;
}

int variant_rank(const std::string& v) {
  if (v == "unet") return 0;
  if (v == "unet_skip") return 1;
  if (v == "mnet") return 2;
  return 3;
}

int Cli::cmd_report() {
  RunConfig cfg = resolve(explicit_settings(), false);
  if (weights_ != "latest" && weights_ != "best") {
    throw Error(ErrorCode::InvalidConfig, "--weights must be latest or best");
  }
  const fs::path root = cfg.output_dir;
  std::vector<std::string> runs = report_runs_;
  if (runs.empty() && fs::is_directory(root)) {
    for (const auto& e : fs::directory_iterator(root)) {
      if (fs::is_directory(e.path() / "report")) runs.push_back(e.path().filename().string());
    }
    std::sort(runs.begin(), runs.end());
  }
  std::vector<EvaluationReport> reports;
  for (const auto& run : runs) {
    fs::path dir = root / run / "report";
    if (weights_ == "best") dir /= "best";
    if (!fs::is_directory(dir)) {
      throw Error(ErrorCode::MissingCheckpoint, "no evaluation report in " + dir.string());
    }
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.ends_with("_report.json")) reports.push_back(read_report_json(e.path()));
    }
  }
  if (reports.empty()) {
    throw Error(ErrorCode::MissingCheckpoint,
                "no evaluation reports under " + root.string() + "; run evaluate first");
  }
  std::stable_sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    return variant_rank(a.variant) < variant_rank(b.variant);
  });
  for (const char* ext : {".txt", ".csv", ".json"}) check_fresh(root / (std::string("comparison") + ext));
  const ComparisonTable table = generate_table(reports);
  std::ofstream(root / "comparison.txt") << table.text;
  std::ofstream(root / "comparison.csv") << table.csv;
  std::ofstream(root / "comparison.json") << table.json;
  out_ << table.text;
  return 0;
}

int Cli::main(int argc, const char* const* argv) {
  CLI::App app("Brain tumor segmentation on T1 MRI slices: U-Net, U-Net with skip "
               "connections and M-Net.",
               "brainseg");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  declare(app);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset in the published layout");
  synth->add_option("dir", synth_dir_, "destination directory")->required();
  synth->add_option("--count", synth_count_, "number of slices");
  synth->add_option("--synth-seed", synth_seed_, "generator seed");
  synth->add_option("--side", synth_side_, "slice side in pixels");
  synth->add_option("--noise", synth_noise_, "noise standard deviation");
  synth->add_flag("--replica", synth_replica_,
                  "3064 noise-free 512x512 slices with the published label counts");

  auto* verify = app.add_subcommand("verify", "check slice count and label histogram");
  verify->add_flag("--allow-partial", allow_partial_, "accept counts other than the published ones");

  auto* split = app.add_subcommand("split", "write the train/val/test split of a run");
  auto* train = app.add_subcommand("train", "train a model; checkpoints every epoch");
  auto* resume_cmd = app.add_subcommand("resume", "continue a run from its latest checkpoint");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score final and best weights on the test split");
  auto* predict = app.add_subcommand("predict", "render input | truth | prediction panels");
  predict->add_option("--index", predict_indices_, "slice indices (default: first test slices)");
  predict->add_option("--count", predict_count_, "number of test slices when --index is absent");
  predict->add_option("--weights", weights_, "latest | best");
  auto* report = app.add_subcommand("report", "comparison table over evaluated runs");
  report->add_option("--runs", report_runs_, "run names (default: every evaluated run)");
  report->add_option("--weights", weights_, "latest | best");

  for (auto* sub : {synth, split, train, evaluate_cmd, predict, report}) {
    sub->add_flag("--force", force_, "overwrite existing outputs");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out_, err_);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth();
    if (*verify) return cmd_verify();
    if (*split) return cmd_split();
    if (*train) return cmd_train();
    if (*resume_cmd) return cmd_resume();
    if (*evaluate_cmd) return cmd_evaluate();
    if (*predict) return cmd_predict();
    if (*report) return cmd_report();
  } catch (const Error& e) {
    err_ << "error: " << e.what() << '\n';
    switch (error_class(e.code())) {
      case ErrorClass::Config: return kExitConfig;
      case ErrorClass::Data: return kExitData;
      case ErrorClass::Runtime: return kExitRuntime;
    }
  } catch (const fs::filesystem_error& e) {
    err_ << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err_ << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return Cli(out, err).main(argc, argv);
}

}  // namespace brainseg::cli
