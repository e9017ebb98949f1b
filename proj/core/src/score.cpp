#include "ecnu/score.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "ecnu/data.hpp"
#include "ecnu/error.hpp"

namespace ecnu {

std::vector<double> abs_error(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("abs_error lengths differ: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()));
  }
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(truth[i] - pred[i]);
  return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ContractError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

RobustStats fit_robust_stats(const std::vector<std::vector<double>>& val_errors) {
  if (val_errors.size() < 4) {
    throw ContractError("robust statistics need at least 4 validation ticks, got " +
                        std::to_string(val_errors.size()));
  }
  const std::size_t n = val_errors.front().size();
  RobustStats stats;
  std::vector<double> column(val_errors.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < val_errors.size(); ++t) {
      if (val_errors[t].size() != n) throw DimensionError("ragged validation error matrix");
      column[t] = val_errors[t][i];
    }
    std::sort(column.begin(), column.end());
    stats.median.push_back(quantile_sorted(column, 0.5));
    stats.iqr.push_back(quantile_sorted(column, 0.75) - quantile_sorted(column, 0.25));
  }
  std::vector<double> sorted_iqr = stats.iqr;
  std::sort(sorted_iqr.begin(), sorted_iqr.end());
  stats.floor = std::max(1e-2 * quantile_sorted(sorted_iqr, 0.5), 1e-8);
  for (double& q : stats.iqr) q = std::max(q, stats.floor);
  return stats;
}

std::vector<double> normalize(std::span<const double> err, const RobustStats& stats) {
  if (err.size() != stats.median.size()) {
    throw DimensionError("error vector has " + std::to_string(err.size()) + " sensors, stats have " +
                         std::to_string(stats.median.size()));
  }
  std::vector<double> out(err.size());
  for (std::size_t i = 0; i < err.size(); ++i) out[i] = (err[i] - stats.median[i]) / stats.iqr[i];
  return out;
}

MaxScore aggregate_max(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("aggregate_max of an empty score vector");
  MaxScore best{scores[0], 0};
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > best.value) best = {scores[i], i};
  }
  return best;
}

std::vector<double> sma(std::span<const double> series, std::size_t m) {
  if (m == 0) throw ContractError("moving-average window must be >= 1");
  std::vector<double> out(series.size());
  for (std::size_t t = 0; t < series.size(); ++t) {
    const std::size_t lo = t + 1 >= m ? t + 1 - m : 0;
    double acc = 0.0;
    for (std::size_t s = lo; s <= t; ++s) acc += series[s];
    out[t] = acc / static_cast<double>(t + 1 - lo);
  }
  return out;
}

Metrics metrics(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("label lengths differ: " + std::to_string(predicted.size()) + " vs " +
                         std::to_string(truth.size()));
  }
  Metrics m;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const int p = predicted[t], y = truth[t];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw ContractError("labels must be binary");
    if (p == 1 && y == 1) ++m.tp;
    if (p == 1 && y == 0) ++m.fp;
    if (p == 0 && y == 1) ++m.fn;
    if (p == 0 && y == 0) ++m.tn;
  }
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

std::vector<int> apply_threshold(std::span<const double> scores, double threshold) {
  std::vector<int> out(scores.size());
  for (std::size_t t = 0; t < scores.size(); ++t) out[t] = scores[t] > threshold ? 1 : 0;
  return out;
}

DetectionReport grid_search_threshold(std::span<const double> scores, std::span<const int> labels,
                                      std::size_t grid_size) {
  if (grid_size < 2) throw ContractError("grid_size must be >= 2");
  if (scores.size() != labels.size()) {
    throw DimensionError("scores and labels differ in length");
  }
  if (scores.empty()) throw ContractError("no scores to threshold");

  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front(), hi = sorted.back();
  std::vector<double> candidates;
  for (std::size_t g = 0; g < grid_size; ++g) {
    candidates.push_back(lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_size - 1));
  }
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() <= 10 * grid_size) candidates.insert(candidates.end(), distinct.begin(), distinct.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // Positives above a threshold come from a suffix of the score-sorted ticks.
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<std::size_t> positives_at_or_below(order.size() + 1, 0);
  for (std::size_t r = 0; r < order.size(); ++r) {
    positives_at_or_below[r + 1] = positives_at_or_below[r] + (labels[order[r]] == 1 ? 1 : 0);
  }
  const std::size_t total_pos = positives_at_or_below.back();

  double best_f1 = -1.0, best_threshold = candidates.front();
  for (double c : candidates) {
    const auto below = static_cast<std::size_t>(
        std::upper_bound(sorted.begin(), sorted.end(), c) - sorted.begin());
    const std::size_t tp = total_pos - positives_at_or_below[below];
    const std::size_t flagged = sorted.size() - below;
    const std::size_t fp = flagged - tp, fn = total_pos - tp;
    const double p = flagged == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = total_pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_threshold = c;
    }
  }

  DetectionReport report;
  report.threshold = best_threshold;
  report.predicted = apply_threshold(scores, best_threshold);
  report.metrics = metrics(report.predicted, labels);
  report.candidates = candidates.size();
  if (total_pos == 0) report.warning = "labels contain no anomalies; metrics are degenerate";
  if (total_pos == labels.size()) report.warning = "labels are all anomalous; metrics are degenerate";
  return report;
}

ScoreSeries score_series(const std::vector<std::vector<double>>& preds,
                         const std::vector<std::vector<double>>& truths, const RobustStats& stats,
                         std::size_t sma_window) {
  if (preds.size() != truths.size()) throw DimensionError("prediction and truth counts differ");
  ScoreSeries s;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    s.err.push_back(abs_error(preds[t], truths[t]));
    s.a.push_back(normalize(s.err.back(), stats));
    const MaxScore m = aggregate_max(s.a.back());
    s.aggregate.push_back(m.value);
    s.argmax.push_back(m.sensor);
  }
  s.smoothed = sma(s.aggregate, sma_window);
  return s;
}

void write_scores_csv(const std::filesystem::path& path, const ScoreSeries& scores,
                      std::span<const std::size_t> times, std::span<const std::string> sensor_names,
                      bool per_sensor) {
  if (times.size() != scores.aggregate.size()) throw DimensionError("score/time length mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "time,A,A_smooth,argmax_sensor";
  if (per_sensor) {
    for (const auto& name : sensor_names) out << ",a_" << name;
  }
  out << '\n';
  for (std::size_t t = 0; t < times.size(); ++t) {
    out << times[t] << ',' << format_double(scores.aggregate[t]) << ','
        << format_double(scores.smoothed[t]) << ',' << scores.argmax[t];
    if (per_sensor) {
      for (double a : scores.a[t]) out << ',' << format_double(a);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_report(const std::filesystem::path& path, const DetectionReport& report,
                  std::size_t sma_window, std::optional<std::size_t> grid_size) {
  nlohmann::ordered_json j;
  j["threshold"] = report.threshold;
  j["threshold_source"] = grid_size ? "grid_search" : "fixed";
  if (grid_size) {
    j["grid_size"] = *grid_size;
    j["candidates"] = report.candidates;
  }
  j["sma_window"] = sma_window;
  j["ticks"] = report.predicted.size();
  j["flagged"] = std::count(report.predicted.begin(), report.predicted.end(), 1);
  if (report.has_labels) {
    j["tp"] = report.metrics.tp;
    j["fp"] = report.metrics.fp;
    j["fn"] = report.metrics.fn;
    j["tn"] = report.metrics.tn;
    j["precision"] = report.metrics.precision;
    j["recall"] = report.metrics.recall;
    j["f1"] = report.metrics.f1;
  }
  if (!report.warning.empty()) j["warning"] = report.warning;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace ecnu
