#pragma once

// Graph deviation scoring: absolute prediction errors, robust per-sensor
// normalization (median / IQR), max over sensors, moving-average smoothing,
// and threshold selection by F1 grid search. No point adjustment is applied.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ecnu {

std::vector<double> abs_error(std::span<const double> pred, std::span<const double> truth);

/// Linear-interpolation quantile of an ascending-sorted sample.
double quantile_sorted(std::span<const double> sorted, double q);

struct RobustStats {
  std::vector<double> median;
  std::vector<double> iqr;  // already floored
  double floor = 0.0;
};

/// Per-sensor median and IQR over validation-period errors (one N-vector per
/// tick). IQRs are floored at max(1e-2 * median of all IQRs, 1e-8).
RobustStats fit_robust_stats(const std::vector<std::vector<double>>& val_errors);

std::vector<double> normalize(std::span<const double> err, const RobustStats& stats);

struct MaxScore {
  double value = 0.0;
  std::size_t sensor = 0;
};

/// Largest score and the lowest index attaining it.
MaxScore aggregate_max(std::span<const double> scores);

/// Trailing mean over the last min(m, t + 1) values.
std::vector<double> sma(std::span<const double> series, std::size_t m);

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// 0/0 ratios are 0.
Metrics metrics(std::span<const int> predicted, std::span<const int> truth);

struct DetectionReport {
  double threshold = 0.0;
  std::vector<int> predicted;
  Metrics metrics;
  std::size_t candidates = 0;
  bool has_labels = true;
  std::string warning;
};

/// Flags ticks whose score is strictly above `threshold`.
std::vector<int> apply_threshold(std::span<const double> scores, double threshold);

/// Evaluates `grid_size` evenly spaced thresholds over [min, max] of the
/// scores, plus every distinct score when there are at most 10 * grid_size of
/// them, and keeps the best F1 (lowest threshold on ties).
DetectionReport grid_search_threshold(std::span<const double> scores, std::span<const int> labels,
                                      std::size_t grid_size = 400);

struct ScoreSeries {
  std::vector<std::vector<double>> err;
  std::vector<std::vector<double>> a;
  std::vector<double> aggregate;
  std::vector<std::size_t> argmax;
  std::vector<double> smoothed;
};

ScoreSeries score_series(const std::vector<std::vector<double>>& preds,
                         const std::vector<std::vector<double>>& truths, const RobustStats& stats,
                         std::size_t sma_window);

/// Columns: time, A, A_smooth, argmax_sensor and optionally a_<sensor>.
void write_scores_csv(const std::filesystem::path& path, const ScoreSeries& scores,
                      std::span<const std::size_t> times,
                      std::span<const std::string> sensor_names, bool per_sensor);

void write_report(const std::filesystem::path& path, const DetectionReport& report,
                  std::size_t sma_window, std::optional<std::size_t> grid_size);

}  // namespace ecnu
