#pragma once

// End-to-end training and detection shared by the command-line tool, the
// sensitivity sweep and the acceptance suite.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecnu/checkpoint.hpp"
#include "ecnu/data.hpp"
#include "ecnu/model.hpp"
#include "ecnu/score.hpp"
#include "ecnu/train.hpp"

namespace ecnu {

struct ScoreOptions {
  std::size_t sma_window = 3;
  std::size_t grid_size = 400;
  /// Used instead of the grid search when set; required for unlabeled data.
  std::optional<double> threshold;
  bool per_sensor = false;
};

struct RunConfig {
  std::string profile = "synth";
  ModelConfig model = ModelConfig::profile("synth");
  TrainConfig train;
  PreprocessOptions preprocess;
  ScoreOptions score;

  /// Hyperparameters of the named profile (swat, wadi, psm, synth) plus the
  /// matching preprocessing.
  static RunConfig for_profile(std::string_view name);

  void validate(std::size_t n_sensors) const;
};

/// Starts from the profile named by `profile_override`, else the file's
/// "profile" key, else synth; then applies the file's sections. Unknown keys
/// are a ContractError.
RunConfig resolve_run_config(const std::optional<std::string>& json_text,
                             const std::optional<std::string>& profile_override);
std::string run_config_to_json(const RunConfig& config);

struct TrainOutcome {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  bool aborted = false;
  std::string abort_reason;
};

/// Preprocesses (fitting min-max stats), windows, splits, fits, then fits the
/// robust scoring statistics on the best model's validation errors.
TrainOutcome train_model(const RawSeries& train_raw, const RunConfig& config,
                         const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Test-time preprocessing: no head trimming, stored min-max stats.
RawSeries prepare_test_series(const RawSeries& test_raw, const PreprocessOptions& options,
                              const std::optional<NormStats>& norm);

struct Detection {
  ScoreSeries scores;
  std::vector<std::size_t> times;
  std::vector<std::vector<double>> predictions;
  std::vector<std::vector<double>> truths;
  DetectionReport report;
  std::vector<int> labels;  // window labels, empty when the test data has none
};

/// Scores every test window and thresholds: grid search on labeled data unless
/// a fixed threshold is given. Unlabeled data without a threshold is a ContractError.
Detection detect(const Checkpoint& checkpoint, const RawSeries& test_raw, const ScoreOptions& options);

/// Same scoring with last-value persistence as the predictor; robust stats
/// come from its errors on the validation windows of the training data.
Detection detect_persistence_baseline(const RawSeries& train_raw, const RawSeries& test_raw,
                                      const RunConfig& config);

struct SweepRow {
  double value = 0.0;
  double mean_f1 = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single repetition.
  double std_f1 = 0.0;
  std::size_t n = 0;
  std::vector<double> f1;
};

/// Trains and detects `repetitions` times per value with seeds seed, seed+1, ...
/// `parameter` is "window" or "topk". Needs labeled test data.
std::vector<SweepRow> sweep(const RawSeries& train_raw, const RawSeries& test_raw,
                            const RunConfig& config, std::string_view parameter,
                            const std::vector<std::size_t>& values, std::size_t repetitions);

}  // namespace ecnu
