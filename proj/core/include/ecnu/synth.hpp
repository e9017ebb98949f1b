#pragma once

// Seeded synthetic sensor data with a planted dependency graph and labeled
// anomaly segments, written in the same CSV schema the data module reads.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ecnu/data.hpp"

namespace ecnu {

struct SynthEdge {
  std::size_t driver = 0;
  std::size_t driven = 0;
  std::size_t lag = 1;
  double weight = 1.0;

  bool operator==(const SynthEdge&) const = default;
};

enum class InjectionType { kOffset, kFreeze, kSwap };

std::string_view to_string(InjectionType type);
InjectionType injection_from_string(std::string_view name);

/// `start` is a test-period tick. Offsets are in units of the sensor's
/// training standard deviation; swaps report `swap_source`'s value instead.
struct AnomalySegment {
  std::size_t start = 0;
  std::size_t length = 0;
  std::vector<std::size_t> sensors;
  InjectionType type = InjectionType::kOffset;
  double magnitude = 3.0;
  std::size_t swap_source = 0;

  bool operator==(const AnomalySegment&) const = default;
};

struct SynthSpec {
  std::size_t n_sensors = 10;
  std::size_t t_train = 5000;
  std::size_t t_test = 2000;
  std::vector<SynthEdge> edges;
  double noise_sigma = 0.1;
  std::vector<AnomalySegment> anomalies;
  std::uint64_t seed = 0;

  /// Throws ContractError: ids out of range, lag 0, cyclic drivers, a sensor
  /// driven twice by the same driver, segments outside the test period.
  void validate() const;

  /// 10 sensors, 8 planted edges, six segments covering 5% of the test ticks.
  static SynthSpec acceptance_default(std::uint64_t seed = 0);

  bool operator==(const SynthSpec&) const = default;
};

SynthSpec synth_spec_from_json(std::string_view text);
std::string synth_spec_to_json(const SynthSpec& spec);
SynthSpec load_synth_spec(const std::filesystem::path& path);
void save_synth_spec(const std::filesystem::path& path, const SynthSpec& spec);

struct SynthDataset {
  RawSeries train;  // unlabeled, anomaly-free
  RawSeries test;   // labeled
  std::vector<SynthEdge> edges;
};

/// Sensors without an incoming edge follow AR(1) plus a sinusoid around a
/// per-sensor level. Driven sensors are the lagged weighted sum of their
/// drivers plus white noise. Train and test are consecutive stretches of one
/// series; anomalies only alter the reported test values.
SynthDataset generate(const SynthSpec& spec);

/// "driver driven lag weight" per line under a '#' header.
void write_ground_truth_edges(const std::filesystem::path& path, const std::vector<SynthEdge>& edges);

}  // namespace ecnu
