#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ecnu {

/// N sensors observed over T ticks. Values are stored sensor-major
/// (`values[i * T + t]`); missing observations are flagged in `missing`.
struct RawSeries {
  std::vector<std::string> sensor_names;
  std::size_t length = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;
  std::optional<std::vector<int>> labels;

  static RawSeries with_shape(std::vector<std::string> names, std::size_t length);

  std::size_t n_sensors() const { return sensor_names.size(); }
  double value(std::size_t sensor, std::size_t t) const { return values[sensor * length + t]; }
  double& value(std::size_t sensor, std::size_t t) { return values[sensor * length + t]; }
  bool is_missing(std::size_t sensor, std::size_t t) const {
    return missing[sensor * length + t] != 0;
  }
  std::span<const double> sensor(std::size_t i) const {
    return {values.data() + i * length, length};
  }
  bool has_missing() const;

  /// Throws DataError when sizes disagree or labels are not binary.
  void validate() const;
};

/// Header row of sensor names, optional trailing "label" column, one row per
/// tick. Empty cells are missing values.
RawSeries read_csv(std::istream& in);
RawSeries load_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const RawSeries& series);
void save_csv(const std::filesystem::path& path, const RawSeries& series);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

RawSeries downsample_median(const RawSeries& series, std::size_t factor);
RawSeries impute_mean(const RawSeries& series);
RawSeries trim_head(const RawSeries& series, std::size_t n);

struct NormStats {
  std::vector<double> min;
  std::vector<double> max;
};

NormStats fit_minmax(const RawSeries& train);
/// (x - min) / (max - min) per sensor, no clipping. Constant sensors map to 0.
RawSeries apply_minmax(const RawSeries& series, const NormStats& stats);

struct PreprocessOptions {
  std::size_t trim_head = 0;
  std::size_t downsample = 1;
  bool impute = true;
  bool normalize = false;
};

/// trim -> downsample -> impute -> (min-max with `stats`, fitted here if absent).
RawSeries preprocess(const RawSeries& raw, const PreprocessOptions& options,
                     std::optional<NormStats>& stats);

/// Writes the JSON sidecar describing how a processed CSV was produced.
void write_preprocess_metadata(const std::filesystem::path& path, const PreprocessOptions& options,
                               const std::optional<NormStats>& stats,
                               const std::filesystem::path& source);
std::optional<NormStats> read_stats_from_metadata(const std::filesystem::path& path);

/// Sliding windows over a gap-free series. Window i predicts the column at
/// `target_time(i)` from the `window` columns right before it.
class WindowedDataset {
 public:
  WindowedDataset(std::shared_ptr<const RawSeries> series, std::size_t window,
                  std::vector<std::size_t> target_times);

  std::size_t size() const { return targets_.size(); }
  bool empty() const { return targets_.empty(); }
  std::size_t window() const { return window_; }
  std::size_t n_sensors() const { return series_->n_sensors(); }
  bool has_labels() const { return series_->labels.has_value(); }
  const RawSeries& series() const { return *series_; }

  std::size_t target_time(std::size_t i) const { return targets_[i]; }
  const std::vector<std::size_t>& target_times() const { return targets_; }
  /// N x w row-major: row = sensor, column j = tick (target_time - w + j).
  void copy_input(std::size_t i, std::span<double> out) const;
  std::vector<double> input(std::size_t i) const;
  void copy_target(std::size_t i, std::span<double> out) const;
  std::vector<double> target(std::size_t i) const;
  int label(std::size_t i) const;

  WindowedDataset subset(std::vector<std::size_t> target_times) const;

 private:
  std::shared_ptr<const RawSeries> series_;
  std::size_t window_;
  std::vector<std::size_t> targets_;
};

WindowedDataset make_windows(const RawSeries& series, std::size_t window);
WindowedDataset make_windows(std::shared_ptr<const RawSeries> series, std::size_t window);

/// Chronological split: the last ceil(count * val_fraction) windows validate.
std::pair<WindowedDataset, WindowedDataset> split_train_val(const WindowedDataset& windows,
                                                            double val_fraction);

}  // namespace ecnu
