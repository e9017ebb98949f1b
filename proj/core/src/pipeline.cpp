#include "ecnu/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "ecnu/error.hpp"
#include "json_io.hpp"

namespace ecnu {
namespace {

using json_io::Json;

void reject_unknown(const Json& j, const std::string& section, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ContractError("config section '" + section + "' must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw ContractError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

std::vector<std::vector<double>> truths_of(const WindowedDataset& windows) {
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) out.push_back(windows.target(i));
  return out;
}

std::vector<std::vector<double>> persistence_predictions(const WindowedDataset& windows) {
  std::vector<std::vector<double>> out;
  const std::size_t n = windows.n_sensors(), w = windows.window();
  std::vector<double> x(n * w);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    windows.copy_input(i, x);
    std::vector<double> last(n);
    for (std::size_t s = 0; s < n; ++s) last[s] = x[s * w + w - 1];
    out.push_back(std::move(last));
  }
  return out;
}

RobustStats stats_from_errors(const std::vector<std::vector<double>>& preds,
                              const std::vector<std::vector<double>>& truths) {
  std::vector<std::vector<double>> err;
  err.reserve(preds.size());
  for (std::size_t t = 0; t < preds.size(); ++t) err.push_back(abs_error(preds[t], truths[t]));
  return fit_robust_stats(err);
}

Detection score_windows(std::vector<std::vector<double>> preds, const WindowedDataset& windows,
                        const RobustStats& robust, const ScoreOptions& options) {
  if (options.sma_window == 0) throw ContractError("sma_window must be >= 1");
  if (!windows.has_labels() && !options.threshold) {
    throw ContractError("test data has no labels; pass a fixed threshold");
  }
  Detection d;
  d.truths = truths_of(windows);
  d.predictions = std::move(preds);
  d.times = windows.target_times();
  d.scores = score_series(d.predictions, d.truths, robust, options.sma_window);
  if (windows.has_labels()) {
    for (std::size_t i = 0; i < windows.size(); ++i) d.labels.push_back(windows.label(i));
  }
  if (options.threshold) {
    d.report.threshold = *options.threshold;
    d.report.predicted = apply_threshold(d.scores.smoothed, *options.threshold);
    d.report.has_labels = !d.labels.empty();
    if (d.report.has_labels) d.report.metrics = metrics(d.report.predicted, d.labels);
  } else {
    d.report = grid_search_threshold(d.scores.smoothed, d.labels, options.grid_size);
  }
  return d;
}

PreprocessOptions without_trim(PreprocessOptions options) {
  options.trim_head = 0;
  return options;
}

}  // namespace

RunConfig RunConfig::for_profile(std::string_view name) {
  RunConfig c;
  c.profile = std::string(name);
  c.model = ModelConfig::profile(name);
  c.preprocess.normalize = true;
  if (name == "swat" || name == "wadi") {
    // Raw data is at 1 s; trimming happens before the 10x downsampling.
    c.preprocess.trim_head = 21600;
    c.preprocess.downsample = 10;
  }
  return c;
}

void RunConfig::validate(std::size_t n_sensors) const {
  model.validate(n_sensors);
  train.validate();
  if (preprocess.downsample == 0) throw ContractError("downsample factor must be >= 1");
  if (score.sma_window == 0) throw ContractError("sma_window must be >= 1");
  if (score.grid_size < 2) throw ContractError("grid_size must be >= 2");
  if (score.threshold && !std::isfinite(*score.threshold)) throw ContractError("threshold must be finite");
}

RunConfig resolve_run_config(const std::optional<std::string>& json_text,
                             const std::optional<std::string>& profile_override) {
  Json j = Json::object();
  if (json_text) {
    try {
      j = Json::parse(*json_text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ContractError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  try {
    reject_unknown(j, "", {"profile", "model", "train", "preprocess", "score"});
    std::string profile = j.value("profile", std::string("synth"));
    if (profile_override) profile = *profile_override;
    RunConfig c = RunConfig::for_profile(profile);
    if (j.contains("model")) {
      reject_unknown(j["model"], "model",
                     {"window", "top_k", "embed_dim", "feature_dim", "ecnum_layers", "ncrm_layers",
                      "aggregate_activation", "hidden_activation", "embed_init_scale"});
      json_io::read(j["model"], c.model);
    }
    if (j.contains("train")) {
      reject_unknown(j["train"], "train",
                     {"learning_rate", "beta1", "beta2", "epsilon", "max_epochs", "patience",
                      "batch_size", "seed", "val_fraction", "freeze_graph_per_epoch"});
      json_io::read(j["train"], c.train);
    }
    if (j.contains("preprocess")) {
      reject_unknown(j["preprocess"], "preprocess", {"trim_head", "downsample", "impute", "normalize"});
      json_io::read(j["preprocess"], c.preprocess);
    }
    if (j.contains("score")) {
      const Json& s = j["score"];
      reject_unknown(s, "score", {"sma_window", "grid_size", "threshold", "per_sensor"});
      c.score.sma_window = s.value("sma_window", c.score.sma_window);
      c.score.grid_size = s.value("grid_size", c.score.grid_size);
      c.score.per_sensor = s.value("per_sensor", c.score.per_sensor);
      if (s.contains("threshold") && !s["threshold"].is_null()) c.score.threshold = s["threshold"].get<double>();
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("invalid config value: ") + e.what());
  }
}

std::string run_config_to_json(const RunConfig& c) {
  Json j;
  j["profile"] = c.profile;
  j["model"] = json_io::model_config(c.model);
  j["train"] = json_io::train_config(c.train);
  j["preprocess"] = json_io::preprocess_options(c.preprocess);
  Json s;
  s["sma_window"] = c.score.sma_window;
  s["grid_size"] = c.score.grid_size;
  s["threshold"] = c.score.threshold ? Json(*c.score.threshold) : Json(nullptr);
  s["per_sensor"] = c.score.per_sensor;
  j["score"] = std::move(s);
  return j.dump(2) + "\n";
}

TrainOutcome train_model(const RawSeries& train_raw, const RunConfig& config,
                         const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate(train_raw.n_sensors());
  std::optional<NormStats> norm;
  auto series = std::make_shared<const RawSeries>(preprocess(train_raw, config.preprocess, norm));
  const WindowedDataset windows = make_windows(series, config.model.window);
  const auto [train, val] = split_train_val(windows, config.train.val_fraction);

  FitResult fitted = fit(train, val, config.model, config.train, on_epoch);
  TrainOutcome out;
  out.history = fitted.history;
  out.aborted = fitted.aborted;
  out.abort_reason = fitted.abort_reason;
  Checkpoint& c = out.checkpoint;
  c.params = std::move(fitted.params);
  c.train = config.train;
  c.preprocess = config.preprocess;
  c.sensor_names = train_raw.sensor_names;
  c.norm = std::move(norm);
  c.best_epoch = fitted.best_epoch;
  c.best_val_loss = fitted.best_val_loss;
  c.robust = stats_from_errors(predict_all(c.params, val), truths_of(val));
  return out;
}

RawSeries prepare_test_series(const RawSeries& test_raw, const PreprocessOptions& options,
                              const std::optional<NormStats>& norm) {
  std::optional<NormStats> stats = norm;
  PreprocessOptions test_options = without_trim(options);
  test_options.normalize = norm.has_value();
  return preprocess(test_raw, test_options, stats);
}

Detection detect(const Checkpoint& checkpoint, const RawSeries& test_raw, const ScoreOptions& options) {
  if (test_raw.sensor_names != checkpoint.sensor_names) {
    throw DataError("test sensors do not match the checkpoint's sensors");
  }
  auto series = std::make_shared<const RawSeries>(
      prepare_test_series(test_raw, checkpoint.preprocess, checkpoint.norm));
  const WindowedDataset windows = make_windows(series, checkpoint.params.config.window);
  return score_windows(predict_all(checkpoint.params, windows), windows, checkpoint.robust, options);
}

Detection detect_persistence_baseline(const RawSeries& train_raw, const RawSeries& test_raw,
                                      const RunConfig& config) {
  std::optional<NormStats> norm;
  auto train_series = std::make_shared<const RawSeries>(preprocess(train_raw, config.preprocess, norm));
  const WindowedDataset windows = make_windows(train_series, config.model.window);
  const auto [train, val] = split_train_val(windows, config.train.val_fraction);
  const RobustStats robust = stats_from_errors(persistence_predictions(val), truths_of(val));

  auto test_series = std::make_shared<const RawSeries>(
      prepare_test_series(test_raw, config.preprocess, norm));
  const WindowedDataset test = make_windows(test_series, config.model.window);
  return score_windows(persistence_predictions(test), test, robust, config.score);
}

std::vector<SweepRow> sweep(const RawSeries& train_raw, const RawSeries& test_raw,
                            const RunConfig& config, std::string_view parameter,
                            const std::vector<std::size_t>& values, std::size_t repetitions) {
  if (parameter != "window" && parameter != "topk") {
    throw ContractError("sweep parameter must be 'window' or 'topk', got '" + std::string(parameter) + "'");
  }
  if (values.empty()) throw ContractError("sweep needs at least one value");
  if (repetitions == 0) throw ContractError("sweep needs at least one repetition");
  if (!test_raw.labels) throw ContractError("sweep needs labeled test data");

  std::vector<SweepRow> rows;
  for (std::size_t value : values) {
    RunConfig c = config;
    (parameter == "window" ? c.model.window : c.model.top_k) = value;
    c.score.threshold.reset();
    SweepRow row;
    row.value = static_cast<double>(value);
    for (std::size_t r = 0; r < repetitions; ++r) {
      c.train.seed = config.train.seed + r;
      const TrainOutcome trained = train_model(train_raw, c);
      if (trained.aborted) throw TrainingError("sweep value " + std::to_string(value) + ": " + trained.abort_reason);
      row.f1.push_back(detect(trained.checkpoint, test_raw, c.score).report.metrics.f1);
    }
    row.n = row.f1.size();
    double sum = 0.0;
    for (double f : row.f1) sum += f;
    row.mean_f1 = sum / static_cast<double>(row.n);
    if (row.n > 1) {
      double ss = 0.0;
      for (double f : row.f1) ss += (f - row.mean_f1) * (f - row.mean_f1);
      row.std_f1 = std::sqrt(ss / static_cast<double>(row.n - 1));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ecnu
