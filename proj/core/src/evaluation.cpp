#include "brainseg/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "brainseg/error.hpp"

namespace brainseg {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(DiceAggregation a) {
  return a == DiceAggregation::PerImage ? "per_image" : "pooled";
}

DiceAggregation parse_aggregation(const std::string& name) {
  if (name == "per_image") return DiceAggregation::PerImage;
  if (name == "pooled") return DiceAggregation::Pooled;
  throw Error(ErrorCode::InvalidConfig, "unknown dice aggregation '" + name + "'");
}

double EvaluationReport::table_dice_percent() const {
  return aggregation == DiceAggregation::PerImage ? mean_dice_percent : pooled_dice_percent;
}

namespace {

void check_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::InvalidConfig, "threshold must lie in (0,1)");
}

/// Streaming reduction over test images; the sums are order-free.
class Scorer {
 public:
  explicit Scorer(const EvaluationConfig& cfg) : cfg_(cfg) {}

  void add(int index, std::span<const float> prob, std::span<const float> target) {
    const ConfusionCounts c = confusion_counts(prob, target, cfg_.threshold);
    pooled_ += c;
    report_.per_image_dice.push_back(dice_from_counts(c, cfg_.smooth));
    report_.indices.push_back(index);
    loss_sum_ += combined_loss(prob, target, cfg_.smooth).total;
  }

  void add_native(double dice) {
    native_sum_ += dice;
    ++native_count_;
  }

  EvaluationReport finish(std::size_t resolution) {
    const std::size_t n = report_.per_image_dice.size();
    if (n == 0) throw Error(ErrorCode::EmptyTestSet, "no test images");
    report_.n_test = n;
    report_.mean_loss = loss_sum_ / static_cast<double>(n);
    double dice_sum = 0.0;
    for (double d : report_.per_image_dice) dice_sum += d;
    report_.mean_dice_percent = 100.0 * dice_sum / static_cast<double>(n);
    report_.pooled_dice_percent = 100.0 * dice_from_counts(pooled_, cfg_.smooth);
    if (native_count_) {
      report_.native_dice_percent = 100.0 * native_sum_ / static_cast<double>(native_count_);
    }
    report_.threshold = cfg_.threshold;
    report_.resolution = resolution;
    report_.aggregation = cfg_.aggregation;
    return std::move(report_);
  }

 private:
  EvaluationConfig cfg_;
  EvaluationReport report_;
  ConfusionCounts pooled_;
  double loss_sum_ = 0.0;
  double native_sum_ = 0.0;
  std::size_t native_count_ = 0;
};

std::vector<std::size_t> range(std::size_t start, std::size_t end) {
  std::vector<std::size_t> v;
  for (std::size_t i = start; i < end; ++i) v.push_back(i);
  return v;
}

}  // namespace

Mask threshold_probabilities(const Grid<float>& prob, double threshold) {
  check_threshold(threshold);
  Mask out(prob.rows(), prob.cols());
  auto src = prob.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= threshold ? 1 : 0;
  return out;
}

Mask predict_mask(const Model& model, const Image& image, double threshold) {
  check_threshold(threshold);
  const std::size_t s = model.config().input_size;
  if (image.rows() != s || image.cols() != s) {
    throw Error(ErrorCode::ShapeMismatch, "image is " + std::to_string(image.rows()) + "x" +
                                              std::to_string(image.cols()) + ", model expects " +
                                              std::to_string(s));
  }
  Tensor input(Shape{1, 1, s, s});
  for (std::size_t i = 0; i < image.size(); ++i) {
    input.values()[i] = static_cast<float>(image.values()[i]);
  }
  const Tensor prob = model.predict(input);
  Grid<float> grid(s, s, std::vector<float>(prob.values().begin(), prob.values().end()));
  return threshold_probabilities(grid, threshold);
}

EvaluationReport evaluate_predictions(std::span<const Tensor> probabilities,
                                      std::span<const Example> examples,
                                      const EvaluationConfig& cfg) {
  check_threshold(cfg.threshold);
  if (probabilities.size() != examples.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one probability map per example required");
  }
  if (examples.empty()) throw Error(ErrorCode::EmptyTestSet, "no test images");
  Scorer scorer(cfg);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (probabilities[i].shape() != examples[i].target.shape()) {
      throw Error(ErrorCode::ShapeMismatch, "prediction " + probabilities[i].shape().str() +
                                                " vs target " +
                                                examples[i].target.shape().str());
    }
    scorer.add(examples[i].index, probabilities[i].values(), examples[i].target.values());
  }
  return scorer.finish(examples.front().target.shape().h);
}

EvaluationReport evaluate(const Model& model, std::span<const Example> test,
                          const EvaluationConfig& cfg) {
  check_threshold(cfg.threshold);
  if (test.empty()) throw Error(ErrorCode::EmptyTestSet, "no test images");
  Scorer scorer(cfg);
  const std::size_t batch = std::max<std::size_t>(cfg.batch_size, 1);
  for (std::size_t start = 0; start < test.size(); start += batch) {
    const auto sel = range(start, std::min(start + batch, test.size()));
    const auto [inputs, targets] = make_batch(test, sel);
    const Tensor prob = model.predict(inputs);
    for (std::size_t n = 0; n < sel.size(); ++n) {
      scorer.add(test[sel[n]].index, prob.sample(n), targets.sample(n));
    }
  }
  EvaluationReport report = scorer.finish(model.config().input_size);
  report.variant = to_string(model.config().variant);
  return report;
}

EvaluationReport evaluate(const Model& model, std::span<const SliceRecord> test,
                          const PreprocessConfig& pre, const EvaluationConfig& cfg) {
  check_threshold(cfg.threshold);
  if (test.empty()) throw Error(ErrorCode::EmptyTestSet, "no test images");
  if (pre.target_size != model.config().input_size) {
    throw Error(ErrorCode::DataModelMismatch, "preprocess size differs from model input size");
  }
  Scorer scorer(cfg);
  for (const auto& rec : test) {
    const Example ex = make_example(rec, pre);
    const Tensor prob = model.predict(ex.input);
    scorer.add(ex.index, prob.values(), ex.target.values());
    if (cfg.native_resolution) {
      const std::size_t s = pre.target_size;
      Image p(s, s);
      for (std::size_t i = 0; i < p.size(); ++i) p.values()[i] = prob.values()[i];
      const Image up = resize_image(p, rec.mask.rows());
      Mask pred(up.rows(), up.cols());
      for (std::size_t i = 0; i < up.size(); ++i) pred.values()[i] = up.values()[i] >= cfg.threshold;
      scorer.add_native(dice_coefficient(pred, rec.mask, cfg.smooth));
    }
  }
  EvaluationReport report = scorer.finish(model.config().input_size);
  report.variant = to_string(model.config().variant);
  return report;
}

RgbImage compose_comparison(const Image& image, const Mask& truth, const Mask& pred) {
  if (!image.same_shape(truth) || !image.same_shape(pred)) {
    throw Error(ErrorCode::ShapeMismatch, "image, truth and prediction must share a shape");
  }
  constexpr std::size_t kGutter = 2;
  constexpr double kAlpha = 0.45;
  const std::size_t h = image.rows(), w = image.cols();
  RgbImage out(3 * w + 2 * kGutter, h);
  std::fill(out.pixels.begin(), out.pixels.end(), 255);

  const auto [lo, hi] = std::minmax_element(image.values().begin(), image.values().end());
  const double range = *hi - *lo;
  auto gray_at = [&](std::size_t r, std::size_t c) {
    return range > 0.0 ? (image(r, c) - *lo) / range * 255.0 : 0.0;
  };

  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double g = gray_at(r, c);
      const auto gray = static_cast<std::uint8_t>(std::lround(g));
      const auto tinted = [&](bool on, std::size_t channel) {
        if (!on) return gray;
        const double target = channel == 0 ? 255.0 : 0.0;
        return static_cast<std::uint8_t>(std::lround((1.0 - kAlpha) * g + kAlpha * target));
      };
      for (std::size_t panel = 0; panel < 3; ++panel) {
        const bool on = panel == 1 ? truth(r, c) != 0 : panel == 2 ? pred(r, c) != 0 : false;
        std::uint8_t* px = out.at(r, panel * (w + kGutter) + c);
        for (std::size_t ch = 0; ch < 3; ++ch) px[ch] = tinted(on, ch);
      }
    }
  }
  return out;
}

void render_comparison(const Image& image, const Mask& truth, const Mask& pred,
                       const fs::path& out_path) {
  write_png(out_path, compose_comparison(image, truth, pred));
}

std::string figure_name(const std::string& variant, int index) {
  return variant + "_" + std::to_string(index) + ".png";
}

namespace {

std::string model_label(const std::string& variant) {
  try {
    return display_name(parse_variant(variant));
  } catch (const Error&) {
    return variant;
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json report_json(const EvaluationReport& r) {
  json j = {{"variant", r.variant},
            {"epochs", r.epochs},
            {"n_test", r.n_test},
            {"mean_loss", r.mean_loss},
            {"mean_dice_percent", r.mean_dice_percent},
            {"pooled_dice_percent", r.pooled_dice_percent},
            {"threshold", r.threshold},
            {"resolution", r.resolution},
            {"aggregation", to_string(r.aggregation)},
            {"indices", r.indices},
            {"per_image_dice", r.per_image_dice}};
  j["native_dice_percent"] = r.native_dice_percent ? json(*r.native_dice_percent) : json(nullptr);
  return j;
}

}  // namespace

ComparisonTable generate_table(std::span<const EvaluationReport> reports) {
  ComparisonTable t;
  std::vector<std::array<std::string, 4>> rows;
  rows.push_back({"Model", "Epochs", "Loss", "Dice Score"});
  for (const auto& r : reports) {
    rows.push_back({model_label(r.variant), std::to_string(r.epochs), fixed(r.mean_loss, 4),
                    fixed(r.table_dice_percent(), 2)});
  }
  std::array<std::size_t, 4> width{};
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream text, csv;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    text << '|';
    for (std::size_t c = 0; c < 4; ++c) {
      text << ' ' << rows[i][c] << std::string(width[c] - rows[i][c].size(), ' ') << " |";
    }
    text << '\n';
    if (i == 0) {
      text << '|';
      for (std::size_t c = 0; c < 4; ++c) text << std::string(width[c] + 2, '-') << '|';
      text << '\n';
    }
    csv << rows[i][0] << ',' << rows[i][1] << ',' << rows[i][2] << ',' << rows[i][3] << '\n';
  }
  json j = json::array();
  for (const auto& r : reports) {
    j.push_back({{"model", model_label(r.variant)},
                 {"variant", r.variant},
                 {"epochs", r.epochs},
                 {"loss", r.mean_loss},
                 {"dice_score", r.table_dice_percent()},
                 {"aggregation", to_string(r.aggregation)},
                 {"resolution", r.resolution},
                 {"threshold", r.threshold},
                 {"n_test", r.n_test}});
  }
  t.text = text.str();
  t.csv = csv.str();
  t.json = j.dump(2) + "\n";
  return t;
}

void write_report(const fs::path& dir, const EvaluationReport& r) {
  fs::create_directories(dir);
  const fs::path txt = dir / (r.variant + "_report.txt");
  std::ofstream out(txt);
  if (!out) throw Error(ErrorCode::UnwritablePath, txt.string());
  out << "# evaluation report\n"
      << "# loss: mean per-image test loss (BCE + soft Dice, smooth 1)\n"
      << "# dice: hard Dice at threshold " << r.threshold << ", evaluated at " << r.resolution
      << "x" << r.resolution << " against nearest-neighbor resized ground truth\n"
      << "# table column uses " << to_string(r.aggregation) << " aggregation\n";
  out.precision(10);
  out << "variant = " << r.variant << '\n'
      << "epochs = " << r.epochs << '\n'
      << "n_test = " << r.n_test << '\n'
      << "mean_loss = " << r.mean_loss << '\n'
      << "mean_dice_percent = " << r.mean_dice_percent << '\n'
      << "pooled_dice_percent = " << r.pooled_dice_percent << '\n'
      << "native_dice_percent = "
      << (r.native_dice_percent ? std::to_string(*r.native_dice_percent) : std::string("n/a"))
      << '\n'
      << "threshold = " << r.threshold << '\n'
      << "resolution = " << r.resolution << '\n';
  if (!out) throw Error(ErrorCode::UnwritablePath, txt.string());

  const fs::path js = dir / (r.variant + "_report.json");
  std::ofstream jout(js);
  jout << report_json(r).dump(2) << '\n';
  if (!jout) throw Error(ErrorCode::UnwritablePath, js.string());
}

EvaluationReport read_report_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingField, path.string() + ": cannot open report");
  try {
    const json j = json::parse(in);
    EvaluationReport r;
    r.variant = j.at("variant").get<std::string>();
    r.epochs = j.at("epochs").get<std::size_t>();
    r.n_test = j.at("n_test").get<std::size_t>();
    r.mean_loss = j.at("mean_loss").get<double>();
    r.mean_dice_percent = j.at("mean_dice_percent").get<double>();
    r.pooled_dice_percent = j.at("pooled_dice_percent").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.resolution = j.at("resolution").get<std::size_t>();
    r.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    r.indices = j.at("indices").get<std::vector<int>>();
    r.per_image_dice = j.at("per_image_dice").get<std::vector<double>>();
    if (!j.at("native_dice_percent").is_null()) {
      r.native_dice_percent = j.at("native_dice_percent").get<double>();
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::UnreadableContainer, path.string() + ": " + e.what());
  }
}

}  // namespace brainseg
