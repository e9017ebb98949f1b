#include "ecnu/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "ecnu/error.hpp"

namespace ecnu {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(pos)));
      return cells;
    }
    cells.push_back(trim(line.substr(pos, comma - pos)));
    pos = comma + 1;
  }
}

double median_of(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

RawSeries RawSeries::with_shape(std::vector<std::string> names, std::size_t length) {
  RawSeries s;
  s.sensor_names = std::move(names);
  s.length = length;
  s.values.assign(s.sensor_names.size() * length, 0.0);
  s.missing.assign(s.sensor_names.size() * length, 0);
  return s;
}

bool RawSeries::has_missing() const {
  return std::any_of(missing.begin(), missing.end(), [](std::uint8_t m) { return m != 0; });
}

void RawSeries::validate() const {
  const std::size_t cells = n_sensors() * length;
  if (values.size() != cells || missing.size() != cells) {
    throw DataError("series storage does not match " + std::to_string(n_sensors()) + " sensors x " +
                    std::to_string(length) + " ticks");
  }
  if (labels) {
    if (labels->size() != length) {
      throw DataError("label count " + std::to_string(labels->size()) + " differs from length " +
                      std::to_string(length));
    }
    for (int l : *labels) {
      if (l != 0 && l != 1) throw DataError("labels must be 0 or 1, got " + std::to_string(l));
    }
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

RawSeries read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  ++line_no;
  std::vector<std::string> header;
  for (std::string_view cell : split_commas(line)) header.emplace_back(cell);
  if (header.empty() || (header.size() == 1 && header[0].empty())) {
    throw ParseError("missing header row", line_no);
  }
  const bool has_label = header.back() == "label";
  const std::size_t n = header.size() - (has_label ? 1 : 0);
  if (n == 0) throw ParseError("header names no sensors", line_no);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) throw ParseError("empty column name in header", line_no);
  }

  std::vector<std::vector<double>> columns(n);
  std::vector<std::vector<std::uint8_t>> gaps(n);
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::string_view cell = cells[i];
      if (cell.empty()) {
        columns[i].push_back(0.0);
        gaps[i].push_back(1);
        continue;
      }
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw ParseError("non-numeric cell '" + std::string(cell) + "' in column " +
                             header[i],
                         line_no);
      }
      columns[i].push_back(v);
      gaps[i].push_back(0);
    }
    if (has_label) {
      const std::string_view cell = cells.back();
      int l = -1;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), l);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || (l != 0 && l != 1)) {
        throw ParseError("label must be 0 or 1, got '" + std::string(cell) + "'", line_no);
      }
      labels.push_back(l);
    }
  }

  header.resize(n);
  RawSeries s = RawSeries::with_shape(std::move(header), columns[0].size());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(columns[i].begin(), columns[i].end(), s.values.begin() + static_cast<std::ptrdiff_t>(i * s.length));
    std::copy(gaps[i].begin(), gaps[i].end(), s.missing.begin() + static_cast<std::ptrdiff_t>(i * s.length));
  }
  if (has_label) s.labels = std::move(labels);
  return s;
}

RawSeries load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in);
}

void write_csv(std::ostream& out, const RawSeries& series) {
  series.validate();
  const std::size_t n = series.n_sensors();
  for (std::size_t i = 0; i < n; ++i) {
    if (i != 0) out << ',';
    out << series.sensor_names[i];
  }
  if (series.labels) out << ",label";
  out << '\n';
  for (std::size_t t = 0; t < series.length; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i != 0) out << ',';
      if (!series.is_missing(i, t)) out << format_double(series.value(i, t));
    }
    if (series.labels) out << ',' << (*series.labels)[t];
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const RawSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(out, series);
  if (!out) throw IoError("write failed for " + path.string());
}

RawSeries downsample_median(const RawSeries& series, std::size_t factor) {
  if (factor == 0) throw ContractError("downsample factor must be >= 1");
  if (factor == 1) return series;
  const std::size_t n = series.n_sensors();
  const std::size_t blocks = (series.length + factor - 1) / factor;
  RawSeries out = RawSeries::with_shape(series.sensor_names, blocks);
  std::vector<double> scratch;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < blocks; ++b) {
      scratch.clear();
      const std::size_t end = std::min(series.length, (b + 1) * factor);
      for (std::size_t t = b * factor; t < end; ++t) {
        if (!series.is_missing(i, t)) scratch.push_back(series.value(i, t));
      }
      if (scratch.empty()) {
        out.missing[i * blocks + b] = 1;
      } else {
        out.value(i, b) = median_of(scratch);
      }
    }
  }
  if (series.labels) {
    std::vector<int> labels(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t end = std::min(series.length, (b + 1) * factor);
      std::size_t ones = 0;
      for (std::size_t t = b * factor; t < end; ++t) ones += (*series.labels)[t] == 1 ? 1 : 0;
      const std::size_t zeros = end - b * factor - ones;
      labels[b] = ones >= zeros ? 1 : 0;  // ties resolve to anomalous
    }
    out.labels = std::move(labels);
  }
  return out;
}

RawSeries impute_mean(const RawSeries& series) {
  RawSeries out = series;
  for (std::size_t i = 0; i < series.n_sensors(); ++i) {
    double acc = 0.0;
    std::size_t observed = 0;
    for (std::size_t t = 0; t < series.length; ++t) {
      if (!series.is_missing(i, t)) {
        acc += series.value(i, t);
        ++observed;
      }
    }
    if (observed == series.length) continue;
    if (observed == 0) {
      throw DataError("sensor '" + series.sensor_names[i] + "' has no observed values to impute from");
    }
    const double mean = acc / static_cast<double>(observed);
    for (std::size_t t = 0; t < series.length; ++t) {
      if (series.is_missing(i, t)) {
        out.value(i, t) = mean;
        out.missing[i * series.length + t] = 0;
      }
    }
  }
  return out;
}

RawSeries trim_head(const RawSeries& series, std::size_t n) {
  if (n >= series.length) {
    throw ContractError("cannot trim " + std::to_string(n) + " ticks from a series of length " +
                        std::to_string(series.length));
  }
  if (n == 0) return series;
  const std::size_t len = series.length - n;
  RawSeries out = RawSeries::with_shape(series.sensor_names, len);
  for (std::size_t i = 0; i < series.n_sensors(); ++i) {
    for (std::size_t t = 0; t < len; ++t) {
      out.value(i, t) = series.value(i, t + n);
      out.missing[i * len + t] = series.missing[i * series.length + t + n];
    }
  }
  if (series.labels) {
    out.labels = std::vector<int>(series.labels->begin() + static_cast<std::ptrdiff_t>(n),
                                  series.labels->end());
  }
  return out;
}

NormStats fit_minmax(const RawSeries& train) {
  NormStats stats;
  for (std::size_t i = 0; i < train.n_sensors(); ++i) {
    double lo = 0.0, hi = 0.0;
    bool seen = false;
    for (std::size_t t = 0; t < train.length; ++t) {
      if (train.is_missing(i, t)) continue;
      const double v = train.value(i, t);
      if (!seen) {
        lo = hi = v;
        seen = true;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!seen) throw DataError("sensor '" + train.sensor_names[i] + "' has no observed values");
    stats.min.push_back(lo);
    stats.max.push_back(hi);
  }
  return stats;
}

RawSeries apply_minmax(const RawSeries& series, const NormStats& stats) {
  if (stats.min.size() != series.n_sensors() || stats.max.size() != series.n_sensors()) {
    throw DataError("normalization stats cover " + std::to_string(stats.min.size()) +
                    " sensors, series has " + std::to_string(series.n_sensors()));
  }
  RawSeries out = series;
  for (std::size_t i = 0; i < series.n_sensors(); ++i) {
    const double span = stats.max[i] - stats.min[i];
    for (std::size_t t = 0; t < series.length; ++t) {
      if (series.is_missing(i, t)) continue;
      out.value(i, t) = span > 0.0 ? (series.value(i, t) - stats.min[i]) / span : 0.0;
    }
  }
  return out;
}

RawSeries preprocess(const RawSeries& raw, const PreprocessOptions& options,
                     std::optional<NormStats>& stats) {
  RawSeries s = trim_head(raw, options.trim_head);
  s = downsample_median(s, options.downsample);
  if (options.impute) s = impute_mean(s);
  if (options.normalize) {
    if (!stats) stats = fit_minmax(s);
    s = apply_minmax(s, *stats);
  }
  return s;
}

void write_preprocess_metadata(const std::filesystem::path& path, const PreprocessOptions& options,
                               const std::optional<NormStats>& stats,
                               const std::filesystem::path& source) {
  nlohmann::ordered_json j;
  j["source"] = source.filename().string();
  j["trim_head"] = options.trim_head;
  j["downsample"] = options.downsample;
  j["impute"] = options.impute;
  j["normalize"] = options.normalize;
  if (stats) {
    j["stats"] = {{"min", stats->min}, {"max", stats->max}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::optional<NormStats> read_stats_from_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed metadata " + path.string() + ": " + e.what());
  }
  if (!j.contains("stats")) return std::nullopt;
  NormStats stats;
  stats.min = j["stats"]["min"].get<std::vector<double>>();
  stats.max = j["stats"]["max"].get<std::vector<double>>();
  return stats;
}

// ---------------------------------------------------------------------------

WindowedDataset::WindowedDataset(std::shared_ptr<const RawSeries> series, std::size_t window,
                                 std::vector<std::size_t> target_times)
    : series_(std::move(series)), window_(window), targets_(std::move(target_times)) {
  for (std::size_t t : targets_) {
    if (t < window_ || t >= series_->length) {
      throw IndexError("window target " + std::to_string(t) + " outside [" +
                       std::to_string(window_) + ", " + std::to_string(series_->length) + ")");
    }
  }
}

void WindowedDataset::copy_input(std::size_t i, std::span<double> out) const {
  const std::size_t t = targets_[i];
  const std::size_t n = n_sensors();
  for (std::size_t s = 0; s < n; ++s) {
    const double* src = series_->values.data() + s * series_->length + (t - window_);
    std::copy_n(src, window_, out.data() + s * window_);
  }
}

std::vector<double> WindowedDataset::input(std::size_t i) const {
  std::vector<double> out(n_sensors() * window_);
  copy_input(i, out);
  return out;
}

void WindowedDataset::copy_target(std::size_t i, std::span<double> out) const {
  const std::size_t t = targets_[i];
  for (std::size_t s = 0; s < n_sensors(); ++s) out[s] = series_->value(s, t);
}

std::vector<double> WindowedDataset::target(std::size_t i) const {
  std::vector<double> out(n_sensors());
  copy_target(i, out);
  return out;
}

int WindowedDataset::label(std::size_t i) const {
  if (!series_->labels) throw ContractError("dataset has no labels");
  return (*series_->labels)[targets_[i]];
}

WindowedDataset WindowedDataset::subset(std::vector<std::size_t> target_times) const {
  return WindowedDataset(series_, window_, std::move(target_times));
}

WindowedDataset make_windows(std::shared_ptr<const RawSeries> series, std::size_t window) {
  if (window == 0) throw ContractError("window size must be >= 1");
  if (series->length <= window) {
    throw ContractError("series of length " + std::to_string(series->length) +
                        " is too short for window " + std::to_string(window));
  }
  if (series->has_missing()) throw DataError("series has missing values; impute before windowing");
  std::vector<std::size_t> targets;
  targets.reserve(series->length - window);
  for (std::size_t t = window; t < series->length; ++t) targets.push_back(t);
  return WindowedDataset(std::move(series), window, std::move(targets));
}

WindowedDataset make_windows(const RawSeries& series, std::size_t window) {
  return make_windows(std::make_shared<const RawSeries>(series), window);
}

std::pair<WindowedDataset, WindowedDataset> split_train_val(const WindowedDataset& windows,
                                                            double val_fraction) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ContractError("val_fraction must lie in (0, 1)");
  }
  const std::size_t count = windows.size();
  const auto n_val = static_cast<std::size_t>(std::ceil(static_cast<double>(count) * val_fraction));
  if (n_val == 0 || n_val >= count) {
    throw ContractError("split of " + std::to_string(count) + " windows leaves an empty side");
  }
  const auto& all = windows.target_times();
  std::vector<std::size_t> train(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> val(all.end() - static_cast<std::ptrdiff_t>(n_val), all.end());
  return {windows.subset(std::move(train)), windows.subset(std::move(val))};
}

}  // namespace ecnu
