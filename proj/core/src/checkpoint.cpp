#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "brainseg/digest.hpp"
#include "brainseg/error.hpp"
#include "brainseg/training.hpp"

namespace brainseg {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'B', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

json to_json(const ModelConfig& m) {
  return {{"variant", to_string(m.variant)},
          {"input_size", m.input_size},
          {"base_channels", m.base_channels},
          {"depth", m.depth},
          {"out_channels", m.out_channels},
          {"init_seed", m.init_seed}};
}

json to_json(const TrainConfig& t) {
  json j = {{"learning_rate", t.learning_rate},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"seed", t.seed},
            {"checkpoint_dir", t.checkpoint_dir.string()},
            {"target_size", t.preprocess.target_size},
            {"normalize", to_string(t.preprocess.normalize)},
            {"deterministic", t.deterministic},
            {"smooth", t.smooth},
            {"threshold", t.threshold}};
  j["max_steps"] = t.max_steps ? json(*t.max_steps) : json(nullptr);
  return j;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.variant = parse_variant(j.at("variant").get<std::string>());
  m.input_size = j.at("input_size").get<std::size_t>();
  m.base_channels = j.at("base_channels").get<std::size_t>();
  m.depth = j.at("depth").get<std::size_t>();
  m.out_channels = j.at("out_channels").get<std::size_t>();
  m.init_seed = j.at("init_seed").get<std::uint64_t>();
  return m;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.epochs = j.at("epochs").get<std::size_t>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
  t.preprocess.target_size = j.at("target_size").get<std::size_t>();
  t.preprocess.normalize = parse_normalization(j.at("normalize").get<std::string>());
  t.deterministic = j.at("deterministic").get<bool>();
  t.smooth = j.at("smooth").get<double>();
  t.threshold = j.at("threshold").get<double>();
  if (!j.at("max_steps").is_null()) t.max_steps = j.at("max_steps").get<std::size_t>();
  return t;
}

class ArchiveWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.append(p, n);
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    const Shape& s = t.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) u64(d);
    bytes(t.data(), t.numel() * sizeof(float));
  }
  void tensors(const std::vector<Tensor>& ts) {
    u64(ts.size());
    for (const auto& t : ts) tensor(t);
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(std::string data) : data_(std::move(data)) {}

  void bytes(void* out, std::size_t n) {
    if (n > data_.size() - pos_) throw Error(ErrorCode::CorruptCheckpoint, "truncated archive");
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > data_.size() - pos_) throw Error(ErrorCode::CorruptCheckpoint, "truncated string");
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    Shape s{u64(), u64(), u64(), u64()};
    const std::size_t n = s.numel();
    if (n > (data_.size() - pos_) / sizeof(float)) {
      throw Error(ErrorCode::CorruptCheckpoint, "truncated tensor " + s.str());
    }
    std::vector<float> v(n);
    bytes(v.data(), n * sizeof(float));
    return Tensor(s, std::move(v));
  }
  std::vector<Tensor> tensors() {
    const std::uint64_t n = u64();
    if (n > data_.size()) throw Error(ErrorCode::CorruptCheckpoint, "bad tensor count");
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string configs_to_json(const ModelConfig& model, const TrainConfig& train) {
  return json{{"model", to_json(model)}, {"train", to_json(train)}}.dump(2);
}

std::pair<ModelConfig, TrainConfig> configs_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    return {model_from_json(j.at("model")), train_from_json(j.at("train"))};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config json: ") + e.what());
  }
}

std::string config_digest(const ModelConfig& m, const TrainConfig& t) {
  std::ostringstream s;
  s.precision(17);
  s << "variant=" << to_string(m.variant) << ";input_size=" << m.input_size
    << ";base_channels=" << m.base_channels << ";depth=" << m.depth
    << ";out_channels=" << m.out_channels << ";target_size=" << t.preprocess.target_size
    << ";normalize=" << to_string(t.preprocess.normalize) << ";learning_rate=" << t.learning_rate
    << ";batch_size=" << t.batch_size << ";smooth=" << t.smooth
    << ";loss=bce+dice;optimizer=adam(0.9,0.999,1e-8)";
  return fnv1a_hex(s.str());
}

void save_checkpoint(const fs::path& file, const Checkpoint& ck) {
  ArchiveWriter w;
  w.bytes(kMagic, sizeof kMagic);
  w.u64(kFormatVersion);
  w.str(configs_to_json(ck.model_config, ck.train_config));
  w.str(ck.digest);
  w.tensors(ck.parameters);
  w.u64(ck.adam_steps);
  w.tensors(ck.adam_m);
  w.tensors(ck.adam_v);
  w.u64(ck.completed_epochs);
  w.str(ck.rng_state);
  w.u64(ck.history.epochs.size());
  for (const auto& e : ck.history.epochs) {
    w.u64(e.epoch);
    w.f64(e.train_loss);
    w.f64(e.val_loss);
    w.f64(e.val_dice);
  }
  w.f64(ck.best_val_dice);
  w.u64(ck.best_epoch);
  Fnv1a sum;
  sum.update(w.buffer());
  w.u64(sum.value());

  // Write-then-rename so an interrupted save never clobbers the last good one.
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::UnwritablePath, tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw Error(ErrorCode::UnwritablePath, tmp.string());
  }
  fs::rename(tmp, file);
}

Checkpoint load_checkpoint(const fs::path& file) {
  if (!fs::is_regular_file(file)) {
    throw Error(ErrorCode::MissingCheckpoint, file.string() + ": no checkpoint");
  }
  std::ifstream in(file, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof kMagic + 16 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, file.string() + ": not a brainseg checkpoint");
  }
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, data.data() + data.size() - 8, 8);
  Fnv1a sum;
  sum.update(std::string_view(data.data(), data.size() - 8));
  if (sum.value() != stored_sum) {
    throw Error(ErrorCode::CorruptCheckpoint, file.string() + ": checksum mismatch");
  }
  data.resize(data.size() - 8);

  ArchiveReader r(std::move(data));
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (r.u64() != kFormatVersion) {
    throw Error(ErrorCode::CorruptCheckpoint, file.string() + ": unsupported format version");
  }
  Checkpoint ck;
  try {
    std::tie(ck.model_config, ck.train_config) = configs_from_json(r.str());
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptCheckpoint, file.string() + ": " + e.what());
  }
  ck.digest = r.str();
  ck.parameters = r.tensors();
  ck.adam_steps = r.u64();
  ck.adam_m = r.tensors();
  ck.adam_v = r.tensors();
  ck.completed_epochs = r.u64();
  ck.rng_state = r.str();
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    EpochRecord e;
    e.epoch = r.u64();
    e.train_loss = r.f64();
    e.val_loss = r.f64();
    e.val_dice = r.f64();
    ck.history.epochs.push_back(e);
  }
  ck.best_val_dice = r.f64();
  ck.best_epoch = r.u64();
  if (!r.at_end()) throw Error(ErrorCode::CorruptCheckpoint, file.string() + ": trailing bytes");
  return ck;
}

Model restore_model(const Checkpoint& ck) {
  Model model(ck.model_config);
  const auto& params = model.parameters();
  if (params.size() != ck.parameters.size()) {
    throw Error(ErrorCode::CorruptCheckpoint, "parameter count differs from architecture");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.shape() != ck.parameters[i].shape()) {
      throw Error(ErrorCode::CorruptCheckpoint, "shape mismatch for " + params[i]->name);
    }
    params[i]->value = ck.parameters[i];
  }
  return model;
}

}  // namespace brainseg
