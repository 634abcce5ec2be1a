#include "brainseg/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "brainseg/error.hpp"
#include "brainseg/metrics.hpp"

namespace brainseg {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be > 0");
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (smooth < 0.0) throw Error(ErrorCode::InvalidConfig, "smooth must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "threshold must lie in (0,1)");
  }
  if (max_steps && *max_steps == 0) throw Error(ErrorCode::InvalidConfig, "max_steps must be >= 1");
  preprocess.validate();
}

TrainingData prepare_training_data(std::span<const SliceRecord> records,
                                   const DatasetSplit& split, const PreprocessConfig& cfg) {
  std::unordered_map<int, const SliceRecord*> by_index;
  for (const auto& r : records) by_index[r.index] = &r;
  auto collect = [&](const std::vector<int>& indices) {
    std::vector<Example> out;
    out.reserve(indices.size());
    for (int idx : indices) {
      const auto it = by_index.find(idx);
      if (it == by_index.end()) {
        throw Error(ErrorCode::MissingField, "split references unknown record " + std::to_string(idx));
      }
      out.push_back(make_example(*it->second, cfg));
    }
    return out;
  };
  return {collect(split.train), collect(split.val)};
}

BatchMetrics measure(const Model& model, std::span<const Example> examples,
                     std::size_t batch_size, double smooth, double threshold) {
  BatchMetrics m;
  if (examples.empty()) {
    m.mean_loss = m.mean_dice = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  std::vector<std::size_t> sel;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    sel.clear();
    for (std::size_t i = start; i < std::min(start + batch_size, examples.size()); ++i) {
      sel.push_back(i);
    }
    const auto [inputs, targets] = make_batch(examples, sel);
    const Tensor prob = model.predict(inputs);
    for (std::size_t n = 0; n < sel.size(); ++n) {
      m.mean_loss += combined_loss(prob.sample(n), targets.sample(n), smooth).total;
      m.mean_dice +=
          dice_from_counts(confusion_counts(prob.sample(n), targets.sample(n), threshold), smooth);
    }
  }
  m.mean_loss /= static_cast<double>(examples.size());
  m.mean_dice /= static_cast<double>(examples.size());
  return m;
}

namespace {

std::vector<nn::Parameter*> parameter_pointers(Model& model) {
  std::vector<nn::Parameter*> out;
  for (const auto& p : model.parameters()) out.push_back(p.get());
  return out;
}

AdamConfig adam_config(const TrainConfig& cfg) {
  AdamConfig a;
  a.learning_rate = cfg.learning_rate;
  return a;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

Trainer::Trainer(Model& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), adam_(adam_config(cfg_), parameter_pointers(model)),
      rng_(cfg_.seed) {
  cfg_.validate();
  if (model_.config().input_size != cfg_.preprocess.target_size) {
    throw Error(ErrorCode::DataModelMismatch,
                "model input_size " + std::to_string(model_.config().input_size) +
                    " != preprocess target_size " + std::to_string(cfg_.preprocess.target_size));
  }
}

Trainer::Trainer(Model& model, const Checkpoint& ck) : Trainer(model, ck.train_config) {
  if (config_digest(model.config(), cfg_) != ck.digest) {
    throw Error(ErrorCode::DigestMismatch, "model does not match checkpoint configuration");
  }
  const auto& params = model_.parameters();
  if (params.size() != ck.parameters.size()) {
    throw Error(ErrorCode::CorruptCheckpoint, "parameter count differs from architecture");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.shape() != ck.parameters[i].shape()) {
      throw Error(ErrorCode::CorruptCheckpoint, "shape mismatch for " + params[i]->name);
    }
    params[i]->value = ck.parameters[i];
  }
  adam_.restore(ck.adam_steps, ck.adam_m, ck.adam_v);
  rng_.deserialize(ck.rng_state);
  history_ = ck.history;
  if (history_.epochs.size() != ck.completed_epochs) {
    throw Error(ErrorCode::CorruptCheckpoint, "history length disagrees with epoch counter");
  }
  best_val_dice_ = ck.best_val_dice;
  best_epoch_ = ck.best_epoch;
}

void Trainer::check_data(const TrainingData& data) const {
  if (data.train.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training examples");
  const std::size_t s = model_.config().input_size;
  auto check = [&](const Example& ex) {
    const Shape sh = ex.input.shape();
    if (sh.h != s || sh.w != s || sh.c != 1) {
      throw Error(ErrorCode::DataModelMismatch,
                  "example " + std::to_string(ex.index) + " has shape " + sh.str() +
                      ", model expects " + std::to_string(s));
    }
  };
  for (const auto& ex : data.train) check(ex);
  for (const auto& ex : data.val) check(ex);
}

EpochRecord Trainer::run_epoch(const TrainingData& data) {
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng_.shuffle(std::span<std::size_t>(order));

  double loss_sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    if (cfg_.max_steps && adam_.steps() >= *cfg_.max_steps) break;
    const std::size_t end = std::min(start + cfg_.batch_size, order.size());
    const std::span<const std::size_t> sel(order.data() + start, end - start);
    auto [inputs, targets] = make_batch(data.train, sel);

    nn::Tape tape;
    const nn::Var prob = model_.forward(tape, tape.constant(std::move(inputs)));
    LossValue parts;
    const nn::Var loss = nn::combined_loss(tape, prob, targets, cfg_.smooth, &parts);
    model_.zero_grad();
    tape.backward(loss);
    adam_.step();

    loss_sum += parts.total * static_cast<double>(sel.size());
    seen += sel.size();
  }

  EpochRecord rec;
  rec.epoch = history_.epochs.size() + 1;
  rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : std::numeric_limits<double>::quiet_NaN();
  const BatchMetrics val = measure(model_, data.val, cfg_.batch_size, cfg_.smooth, cfg_.threshold);
  rec.val_loss = val.mean_loss;
  rec.val_dice = val.mean_dice;
  return rec;
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ck;
  ck.model_config = model_.config();
  ck.train_config = cfg_;
  ck.digest = config_digest(model_.config(), cfg_);
  for (const auto& p : model_.parameters()) ck.parameters.push_back(p->value);
  ck.adam_steps = adam_.steps();
  ck.adam_m = adam_.first_moments();
  ck.adam_v = adam_.second_moments();
  ck.completed_epochs = history_.epochs.size();
  ck.rng_state = rng_.serialize();
  ck.history = history_;
  ck.best_val_dice = best_val_dice_;
  ck.best_epoch = best_epoch_;
  return ck;
}

void Trainer::write_checkpoints(const EpochRecord& rec) {
  const fs::path& dir = cfg_.checkpoint_dir;
  fs::create_directories(dir);

  const bool improved = !std::isnan(rec.val_dice) && rec.val_dice > best_val_dice_;
  if (improved) {
    best_val_dice_ = rec.val_dice;
    best_epoch_ = rec.epoch;
  }
  const Checkpoint ck = snapshot();
  save_checkpoint(dir / checkpoint_files::kLatest, ck);
  if (improved) save_checkpoint(dir / checkpoint_files::kBest, ck);

  {
    std::ofstream hist(dir / checkpoint_files::kHistory, std::ios::app);
    nlohmann::json line = {{"epoch", rec.epoch},
                           {"train_loss", rec.train_loss},
                           {"val_loss", rec.val_loss},
                           {"val_dice", rec.val_dice}};
    hist << line.dump() << '\n';
    if (!hist) throw Error(ErrorCode::UnwritablePath, (dir / checkpoint_files::kHistory).string());
  }

  std::ofstream man(dir / checkpoint_files::kManifest, std::ios::trunc);
  man << "# brainseg checkpoint manifest\n"
      << "config_digest = " << ck.digest << '\n'
      << "variant = " << to_string(ck.model_config.variant) << '\n'
      << "input_size = " << ck.model_config.input_size << '\n'
      << "completed_epochs = " << ck.completed_epochs << '\n'
      << "optimizer_steps = " << ck.adam_steps << '\n'
      << "deterministic = " << (cfg_.deterministic ? "true" : "false") << '\n'
      << "last_train_loss = " << format_number(rec.train_loss) << '\n'
      << "last_val_loss = " << format_number(rec.val_loss) << '\n'
      << "last_val_dice = " << format_number(rec.val_dice) << '\n'
      << "best_epoch = " << best_epoch_ << '\n'
      << "best_val_dice = " << format_number(best_val_dice_ < 0 ? NAN : best_val_dice_) << '\n';
  if (!man) throw Error(ErrorCode::UnwritablePath, (dir / checkpoint_files::kManifest).string());

  const fs::path summary = dir / checkpoint_files::kSummary;
  if (!fs::exists(summary)) std::ofstream(summary) << format_summary(model_);
}

const TrainingHistory& Trainer::run(const TrainingData& data, std::size_t epochs) {
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  check_data(data);
  for (std::size_t e = 0; e < epochs; ++e) {
    if (cfg_.max_steps && adam_.steps() >= *cfg_.max_steps) break;
    const EpochRecord rec = run_epoch(data);
    history_.epochs.push_back(rec);
    if (!cfg_.checkpoint_dir.empty()) write_checkpoints(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history_;
}

TrainingHistory train(Model& model, const TrainingData& data, const TrainConfig& cfg) {
  Trainer trainer(model, cfg);
  return trainer.run(data, cfg.epochs);
}

TrainingHistory train(Model& model, std::span<const SliceRecord> records,
                      const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  return train(model, prepare_training_data(records, split, cfg.preprocess), cfg);
}

std::pair<Model, TrainingHistory> resume(
    const fs::path& checkpoint_dir, const TrainingData& data, std::size_t extra_epochs,
    const std::optional<std::pair<ModelConfig, TrainConfig>>& expected) {
  Checkpoint ck = load_checkpoint(checkpoint_dir / checkpoint_files::kLatest);
  if (expected && config_digest(expected->first, expected->second) != ck.digest) {
    throw Error(ErrorCode::DigestMismatch,
                "requested configuration does not match checkpoint " + ck.digest);
  }
  ck.train_config.checkpoint_dir = checkpoint_dir;
  Model model(ck.model_config);
  Trainer trainer(model, ck);
  TrainingHistory history = trainer.run(data, extra_epochs);
  return {std::move(model), std::move(history)};
}

}  // namespace brainseg
