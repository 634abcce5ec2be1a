#include "brainseg_cli/settings.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <vector>

#include <CLI11.hpp>

#include "brainseg/error.hpp"

namespace brainseg::cli {
namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw Error(ErrorCode::InvalidConfig, key + ": '" + value + "' is not " + what);
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data", [](RunConfig& c, auto&, auto& v) { c.dataset_dir = v; }},
      {"out", [](RunConfig& c, auto&, auto& v) { c.output_dir = v; }},
      {"run", [](RunConfig& c, auto&, auto& v) { c.run_name = v; }},
      {"variant", [](RunConfig& c, auto&, auto& v) { c.model.variant = parse_variant(v); }},
      {"size",
       [](RunConfig& c, auto& k, auto& v) {
         const auto s = to_uint(k, v);
         c.preprocess.target_size = s;
         c.train.preprocess.target_size = s;
         c.model.input_size = s;
       }},
      {"normalize",
       [](RunConfig& c, auto&, auto& v) {
         c.preprocess.normalize = parse_normalization(v);
         c.train.preprocess.normalize = c.preprocess.normalize;
       }},
      {"base_channels", [](RunConfig& c, auto& k, auto& v) { c.model.base_channels = to_uint(k, v); }},
      {"depth", [](RunConfig& c, auto& k, auto& v) { c.model.depth = to_uint(k, v); }},
      {"out_channels", [](RunConfig& c, auto& k, auto& v) { c.model.out_channels = to_uint(k, v); }},
      {"init_seed", [](RunConfig& c, auto& k, auto& v) { c.model.init_seed = to_uint(k, v); }},
      {"learning_rate", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = to_real(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = to_uint(k, v); }},
      {"batch_size",
       [](RunConfig& c, auto& k, auto& v) {
         c.train.batch_size = to_uint(k, v);
         c.evaluation.batch_size = c.train.batch_size;
       }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = to_uint(k, v); }},
      {"deterministic", [](RunConfig& c, auto& k, auto& v) { c.train.deterministic = to_bool(k, v); }},
      {"smooth",
       [](RunConfig& c, auto& k, auto& v) {
         c.train.smooth = to_real(k, v);
         c.evaluation.smooth = c.train.smooth;
       }},
      {"threshold",
       [](RunConfig& c, auto& k, auto& v) {
         c.evaluation.threshold = to_real(k, v);
         c.train.threshold = c.evaluation.threshold;
       }},
      {"aggregation",
       [](RunConfig& c, auto&, auto& v) { c.evaluation.aggregation = parse_aggregation(v); }},
      {"native_resolution",
       [](RunConfig& c, auto& k, auto& v) { c.evaluation.native_resolution = to_bool(k, v); }},
      {"split_seed", [](RunConfig& c, auto& k, auto& v) { c.split_seed = to_uint(k, v); }},
      {"train_ratio", [](RunConfig& c, auto& k, auto& v) { c.ratios.train = to_real(k, v); }},
      {"val_ratio", [](RunConfig& c, auto& k, auto& v) { c.ratios.val = to_real(k, v); }},
      {"test_ratio", [](RunConfig& c, auto& k, auto& v) { c.ratios.test = to_real(k, v); }},
      {"patient_level", [](RunConfig& c, auto& k, auto& v) { c.patient_level = to_bool(k, v); }},
      {"subset", [](RunConfig& c, auto& k, auto& v) { c.subset = to_uint(k, v); }},
      {"max_steps", [](RunConfig& c, auto& k, auto& v) { c.train.max_steps = to_uint(k, v); }},
  };
  return table;
}

}  // namespace

Settings read_settings_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::InvalidConfig, "cannot read config file " + path.string());
  }
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path.string());
  } catch (const CLI::Error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  Settings out;
  for (const auto& item : items) {
    // CLI11 emits bookkeeping entries for section headers.
    if (item.name == "++" || item.name == "--") continue;
    std::string value;
    for (const auto& in : item.inputs) value += (value.empty() ? "" : " ") + in;
    out[item.fullname()] = value;
  }
  return out;
}

void apply_settings(const Settings& settings, RunConfig& cfg) {
  const auto& table = setters();
  for (const auto& [key, value] : settings) {
    const auto it = table.find(key);
    if (it == table.end()) throw Error(ErrorCode::InvalidConfig, "unknown setting '" + key + "'");
    it->second(cfg, key, value);
  }
}

Settings merge(Settings base, const Settings& over) {
  for (const auto& [k, v] : over) base[k] = v;
  return base;
}

}  // namespace brainseg::cli
