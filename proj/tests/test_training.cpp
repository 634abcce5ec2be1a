#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "brainseg/adam.hpp"
#include "brainseg/error.hpp"
#include "brainseg/synthetic.hpp"
#include "brainseg/training.hpp"
#include "support/temp_dir.hpp"

namespace brainseg {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

constexpr std::size_t kSide = 64;

ModelConfig tiny_model(Variant v = Variant::UNet) {
  ModelConfig m;
  m.variant = v;
  m.input_size = kSide;
  m.base_channels = 4;
  m.depth = 3;
  return m;
}

TrainConfig tiny_train(const fs::path& dir = {}) {
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.epochs = 5;
  t.batch_size = 8;
  t.seed = 42;
  t.deterministic = true;
  t.checkpoint_dir = dir;
  t.preprocess.target_size = kSide;
  return t;
}

// A fixed 32-slice subset, split 80/10/10 with the default seed.
const TrainingData& subset32() {
  static const TrainingData data = [] {
    SyntheticOptions opt;
    opt.count = 32;
    opt.side = kSide;
    opt.noise_sd = 10.0;
    const auto records = synthesize_dataset(opt);
    const DatasetSplit split = split_dataset(records, {}, kDefaultSplitSeed);
    PreprocessConfig pre;
    pre.target_size = kSide;
    return prepare_training_data(records, split, pre);
  }();
  return data;
}

TEST(Adam, SingleStepOnQuadraticIsBounded) {
  nn::Parameter w("w", Shape{1, 1, 1, 1});
  w.value.values()[0] = 1.0f;
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  Adam adam(cfg, {&w});
  w.grad.values()[0] = 2.0f * w.value.values()[0];  // d(w^2)/dw
  adam.step();
  const float after = w.value.values()[0];
  const double moved = 1.0 - after;
  EXPECT_GT(moved, 0.0);
  // Weights are float32, so the stored result carries one rounding.
  const double ulp = std::nextafter(after, 2.0f) - after;
  EXPECT_LE(std::abs(moved), 0.1 + 1e-9 + ulp);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, MatchesReferenceRecurrence) {
  nn::Parameter w("w", Shape{1, 1, 1, 2});
  w.value.values()[0] = 1.0f;
  w.value.values()[1] = -3.0f;
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  Adam adam(cfg, {&w});
  double ref[2] = {1.0, -3.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 20; ++t) {
    for (int i = 0; i < 2; ++i) {
      const double g = 2.0 * ref[i];
      w.grad.values()[i] = static_cast<float>(2.0 * w.value.values()[i]);
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    }
    adam.step();
  }
  EXPECT_NEAR(w.value.values()[0], ref[0], 1e-5);
  EXPECT_NEAR(w.value.values()[1], ref[1], 1e-5);
  EXPECT_LT(std::abs(ref[0]), 1.0);
}

TEST(TrainConfig, RejectsContractViolations) {
  auto expect_invalid = [](TrainConfig t) {
    try {
      t.validate();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
  };
  TrainConfig t = tiny_train();
  t.epochs = 0;
  expect_invalid(t);
  t = tiny_train();
  t.learning_rate = 0.0;
  expect_invalid(t);
  t = tiny_train();
  t.batch_size = 0;
  expect_invalid(t);
  t = tiny_train();
  t.threshold = 1.0;
  expect_invalid(t);

  Model m = build_model(tiny_model());
  t = tiny_train();
  t.epochs = 0;
  EXPECT_THROW(train(m, subset32(), t), Error);
  Trainer trainer(m, tiny_train());
  EXPECT_THROW(trainer.run(subset32(), 0), Error);
}

TEST(Trainer, DataModelMismatch) {
  Model m = build_model(tiny_model());
  TrainConfig t = tiny_train();
  t.preprocess.target_size = 128;
  try {
    Trainer trainer(m, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DataModelMismatch);
  }
}

TEST(Trainer, EmptyTrainingSet) {
  Model m = build_model(tiny_model());
  Trainer trainer(m, tiny_train());
  TrainingData empty;
  empty.val = subset32().val;
  try {
    trainer.run(empty, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTrainingSet);
  }
}

TEST(Trainer, SeededRunsAreIdentical) {
  Model a = build_model(tiny_model()), b = build_model(tiny_model());
  TrainConfig t = tiny_train();
  t.epochs = 1;
  const auto ha = train(a, subset32(), t);
  const auto hb = train(b, subset32(), t);
  ASSERT_EQ(ha.epochs.size(), 1u);
  EXPECT_NEAR(ha.epochs[0].train_loss, hb.epochs[0].train_loss, 1e-6);
  EXPECT_EQ(ha.epochs[0].val_loss, hb.epochs[0].val_loss);
}

TEST(Trainer, LossDecreasesOverFiveEpochs) {
  for (Variant v : {Variant::UNet, Variant::UNetSkip, Variant::MNet}) {
    Model m = build_model(tiny_model(v));
    const auto h = train(m, subset32(), tiny_train());
    ASSERT_EQ(h.epochs.size(), 5u);
    EXPECT_LT(h.epochs[4].train_loss, h.epochs[0].train_loss) << to_string(v);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(h.epochs[i].epoch, i + 1);
    for (const auto& e : h.epochs) {
      EXPECT_GE(e.val_dice, 0.0);
      EXPECT_LE(e.val_dice, 1.0);
    }
  }
}

TEST(Trainer, MaxStepsClosesEarly) {
  Model m = build_model(tiny_model());
  TrainConfig t = tiny_train();
  t.max_steps = 5;  // 25 training examples give 4 steps per epoch
  Trainer trainer(m, t);
  trainer.run(subset32(), 10);
  EXPECT_EQ(trainer.steps(), 5u);
  EXPECT_EQ(trainer.completed_epochs(), 2u);
}

TEST(Checkpoint, RoundTripIsBitwiseEqual) {
  TempDir dir;
  Model m = build_model(tiny_model(Variant::MNet));
  Trainer trainer(m, tiny_train());
  trainer.run(subset32(), 2);
  const Checkpoint ck = trainer.snapshot();
  save_checkpoint(dir / "x.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "x.ckpt");

  EXPECT_EQ(back.digest, ck.digest);
  EXPECT_EQ(back.parameters, ck.parameters);
  EXPECT_EQ(back.adam_m, ck.adam_m);
  EXPECT_EQ(back.adam_v, ck.adam_v);
  EXPECT_EQ(back.adam_steps, ck.adam_steps);
  EXPECT_EQ(back.rng_state, ck.rng_state);
  EXPECT_EQ(back.completed_epochs, 2u);
  ASSERT_EQ(back.history.epochs.size(), 2u);
  EXPECT_EQ(back.history.epochs[1].val_loss, ck.history.epochs[1].val_loss);
  EXPECT_EQ(back.model_config.variant, Variant::MNet);
  EXPECT_EQ(back.train_config.learning_rate, ck.train_config.learning_rate);

  const Model restored = restore_model(back);
  const Tensor x = subset32().val[0].input;
  EXPECT_EQ(restored.predict(x), m.predict(x));
}

TEST(Checkpoint, CorruptAndMissingFiles) {
  TempDir dir;
  Model m = build_model(tiny_model());
  Trainer trainer(m, tiny_train());
  trainer.run(subset32(), 1);
  save_checkpoint(dir / "good.ckpt", trainer.snapshot());

  auto expect_code = [](const fs::path& p, ErrorCode code) {
    try {
      load_checkpoint(p);
      FAIL() << p;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code) << e.what();
    }
  };
  expect_code(dir / "absent.ckpt", ErrorCode::MissingCheckpoint);

  std::string bytes;
  {
    std::ifstream in(dir / "good.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x5a;
  std::ofstream(dir / "flipped.ckpt", std::ios::binary) << flipped;
  expect_code(dir / "flipped.ckpt", ErrorCode::CorruptCheckpoint);

  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 3);
  expect_code(dir / "short.ckpt", ErrorCode::CorruptCheckpoint);

  std::ofstream(dir / "junk.ckpt", std::ios::binary) << "not a checkpoint";
  expect_code(dir / "junk.ckpt", ErrorCode::CorruptCheckpoint);
}

TEST(Checkpoint, DirectoryLayout) {
  TempDir dir;
  Model m = build_model(tiny_model());
  TrainConfig t = tiny_train(dir.path());
  t.epochs = 3;
  train(m, subset32(), t);

  using namespace checkpoint_files;
  for (const char* f : {kLatest, kBest, kManifest, kHistory, kSummary}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  std::ifstream hist(dir / kHistory);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(hist, line)) {
    ++lines;
    EXPECT_NE(line.find("\"epoch\":" + std::to_string(lines)), std::string::npos) << line;
  }
  EXPECT_EQ(lines, 3u);

  std::ifstream man(dir / kManifest);
  const std::string text((std::istreambuf_iterator<char>(man)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find("completed_epochs = 3"), std::string::npos);
  EXPECT_NE(text.find("config_digest = " + config_digest(tiny_model(), t)), std::string::npos);
  const Checkpoint best = load_checkpoint(dir / kBest);
  EXPECT_GE(best.best_epoch, 1u);
  EXPECT_LE(best.best_epoch, 3u);
}

TEST(Resume, ThreePlusTwoEqualsFive) {
  TempDir a, b;
  Model continuous = build_model(tiny_model());
  const auto full = train(continuous, subset32(), tiny_train(a.path()));

  Model first = build_model(tiny_model());
  TrainConfig t = tiny_train(b.path());
  t.epochs = 3;
  train(first, subset32(), t);
  auto [resumed, history] = resume(b.path(), subset32(), 2);

  ASSERT_EQ(history.epochs.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(history.epochs[i].epoch, i + 1);
    EXPECT_EQ(history.epochs[i].train_loss, full.epochs[i].train_loss) << i;
  }
  const double ref = full.epochs[4].val_loss;
  EXPECT_LE(std::abs(history.epochs[4].val_loss - ref), 1e-5 * std::abs(ref));
  EXPECT_EQ(resumed.parameters()[3]->value, continuous.parameters()[3]->value);
}

TEST(Resume, HistoryContiguousAcrossManyHops) {
  TempDir dir;
  Model m = build_model(tiny_model());
  TrainConfig t = tiny_train(dir.path());
  t.epochs = 1;
  train(m, subset32(), t);
  for (std::size_t hop = 0; hop < 3; ++hop) {
    auto [model, history] = resume(dir.path(), subset32(), 1);
    ASSERT_EQ(history.epochs.size(), hop + 2);
    for (std::size_t i = 0; i < history.epochs.size(); ++i) EXPECT_EQ(history.epochs[i].epoch, i + 1);
  }
  std::ifstream hist(dir / checkpoint_files::kHistory);
  std::size_t lines = 0;
  for (std::string line; std::getline(hist, line);) ++lines;
  EXPECT_EQ(lines, 4u);
}

TEST(Resume, DigestMismatch) {
  TempDir dir;
  Model m = build_model(tiny_model());
  TrainConfig t = tiny_train(dir.path());
  t.epochs = 1;
  train(m, subset32(), t);

  ModelConfig other = tiny_model();
  other.input_size = 128;
  TrainConfig other_t = t;
  other_t.preprocess.target_size = 128;
  try {
    resume(dir.path(), subset32(), 1, std::make_pair(other, other_t));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DigestMismatch);
  }
  // The epoch budget is not part of the digest.
  TrainConfig longer = t;
  longer.epochs = 50;
  EXPECT_NO_THROW(resume(dir.path(), subset32(), 1, std::make_pair(tiny_model(), longer)));

  Model wrong = build_model(tiny_model(Variant::MNet));
  const Checkpoint ck = load_checkpoint(dir / checkpoint_files::kLatest);
  EXPECT_THROW(Trainer(wrong, ck), Error);
}

TEST(Resume, MissingCheckpoint) {
  TempDir dir;
  try {
    resume(dir.path(), subset32(), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingCheckpoint);
  }
}

TEST(Configs, JsonRoundTrip) {
  ModelConfig m = tiny_model(Variant::UNetSkip);
  m.init_seed = 77;
  TrainConfig t = tiny_train("/tmp/somewhere");
  t.max_steps = 300;
  t.smooth = 0.5;
  const auto [m2, t2] = configs_from_json(configs_to_json(m, t));
  EXPECT_EQ(config_digest(m2, t2), config_digest(m, t));
  EXPECT_EQ(m2.init_seed, 77u);
  EXPECT_EQ(t2.max_steps, std::optional<std::size_t>(300));
  EXPECT_EQ(t2.seed, t.seed);
  EXPECT_TRUE(t2.deterministic);
}

}  // namespace
}  // namespace brainseg
