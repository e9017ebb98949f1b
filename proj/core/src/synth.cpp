#include "ecnu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>
#include <sstream>

#include "ecnu/error.hpp"

namespace ecnu {
namespace {

constexpr std::size_t kBurnIn = 100;
constexpr double kArCoefficient = 0.8;

std::string sensor_name(std::size_t i) { return "s" + std::to_string(i); }

/// Kahn order over the driver graph; empty when it has a cycle.
std::vector<std::size_t> topological_order(std::size_t n, const std::vector<SynthEdge>& edges) {
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& e : edges) ++indegree[e.driven];
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) order.push_back(i);
  }
  for (std::size_t head = 0; head < order.size(); ++head) {
    for (const auto& e : edges) {
      if (e.driver == order[head] && --indegree[e.driven] == 0) order.push_back(e.driven);
    }
  }
  if (order.size() != n) order.clear();
  return order;
}

}  // namespace

std::string_view to_string(InjectionType type) {
  switch (type) {
    case InjectionType::kOffset: return "offset";
    case InjectionType::kFreeze: return "freeze";
    case InjectionType::kSwap: return "swap";
  }
  return "offset";
}

InjectionType injection_from_string(std::string_view name) {
  if (name == "offset") return InjectionType::kOffset;
  if (name == "freeze") return InjectionType::kFreeze;
  if (name == "swap") return InjectionType::kSwap;
  throw ContractError("unknown injection type '" + std::string(name) + "'");
}

void SynthSpec::validate() const {
  if (n_sensors < 2) throw ContractError("synthetic data needs at least 2 sensors");
  if (t_train == 0 || t_test == 0) throw ContractError("t_train and t_test must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ContractError("noise_sigma must be finite and >= 0");
  }
  for (std::size_t a = 0; a < edges.size(); ++a) {
    const auto& e = edges[a];
    if (e.driver >= n_sensors || e.driven >= n_sensors) {
      throw ContractError("edge " + std::to_string(a) + " names a sensor outside [0, " +
                          std::to_string(n_sensors) + ")");
    }
    if (e.driver == e.driven) throw ContractError("edge " + std::to_string(a) + " is a self-loop");
    if (e.lag == 0) throw ContractError("edge " + std::to_string(a) + " has lag 0; lags must be >= 1");
    if (!std::isfinite(e.weight)) throw ContractError("edge " + std::to_string(a) + " has a non-finite weight");
    for (std::size_t b = 0; b < a; ++b) {
      if (edges[b].driver == e.driver && edges[b].driven == e.driven) {
        throw ContractError("edge " + std::to_string(a) + " duplicates edge " + std::to_string(b));
      }
    }
  }
  if (topological_order(n_sensors, edges).empty()) throw ContractError("driver edges contain a cycle");
  for (std::size_t a = 0; a < anomalies.size(); ++a) {
    const auto& seg = anomalies[a];
    const std::string where = "anomaly segment " + std::to_string(a);
    if (seg.length == 0) throw ContractError(where + " has length 0");
    if (seg.start + seg.length > t_test) throw ContractError(where + " runs past the test period");
    if (seg.sensors.empty()) throw ContractError(where + " affects no sensor");
    for (std::size_t s : seg.sensors) {
      if (s >= n_sensors) throw ContractError(where + " names sensor " + std::to_string(s));
    }
    if (seg.type == InjectionType::kSwap && seg.swap_source >= n_sensors) {
      throw ContractError(where + " swaps in sensor " + std::to_string(seg.swap_source));
    }
    if (!std::isfinite(seg.magnitude)) throw ContractError(where + " has a non-finite magnitude");
  }
}

SynthSpec SynthSpec::acceptance_default(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.edges = {{0, 4, 1, 1.0}, {1, 5, 2, 0.9}, {2, 6, 1, 1.1}, {3, 7, 3, 0.8},
                {4, 8, 1, 1.2}, {5, 9, 2, 1.0}, {0, 6, 2, 0.8}, {1, 7, 1, 1.0}};
  using T = InjectionType;
  spec.anomalies = {
      {200, 20, {0}, T::kOffset, 3.0, 0},  {500, 15, {5}, T::kFreeze, 0.0, 0},
      {800, 15, {1}, T::kSwap, 0.0, 3},    {1100, 20, {8}, T::kOffset, -3.0, 0},
      {1400, 15, {2}, T::kSwap, 0.0, 0},   {1700, 15, {4}, T::kFreeze, 0.0, 0},
  };
  return spec;
}

SynthSpec synth_spec_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractError(std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  SynthSpec spec;
  try {
    spec.n_sensors = j.value("n_sensors", spec.n_sensors);
    spec.t_train = j.value("t_train", spec.t_train);
    spec.t_test = j.value("t_test", spec.t_test);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.seed = j.value("seed", spec.seed);
    for (const auto& e : j.value("edges", nlohmann::json::array())) {
      spec.edges.push_back({e.at("driver").get<std::size_t>(), e.at("driven").get<std::size_t>(),
                            e.value("lag", std::size_t{1}), e.value("weight", 1.0)});
    }
    for (const auto& a : j.value("anomalies", nlohmann::json::array())) {
      AnomalySegment seg;
      seg.start = a.at("start").get<std::size_t>();
      seg.length = a.at("length").get<std::size_t>();
      seg.sensors = a.at("sensors").get<std::vector<std::size_t>>();
      seg.type = injection_from_string(a.at("type").get<std::string>());
      seg.magnitude = a.value("magnitude", seg.magnitude);
      seg.swap_source = a.value("swap_source", seg.swap_source);
      spec.anomalies.push_back(std::move(seg));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("invalid synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  nlohmann::ordered_json j;
  j["n_sensors"] = spec.n_sensors;
  j["t_train"] = spec.t_train;
  j["t_test"] = spec.t_test;
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : spec.edges) {
    j["edges"].push_back({{"driver", e.driver}, {"driven", e.driven}, {"lag", e.lag}, {"weight", e.weight}});
  }
  j["anomalies"] = nlohmann::ordered_json::array();
  for (const auto& a : spec.anomalies) {
    nlohmann::ordered_json seg;
    seg["start"] = a.start;
    seg["length"] = a.length;
    seg["sensors"] = a.sensors;
    seg["type"] = std::string(to_string(a.type));
    seg["magnitude"] = a.magnitude;
    seg["swap_source"] = a.swap_source;
    j["anomalies"].push_back(std::move(seg));
  }
  return j.dump(2) + "\n";
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return synth_spec_from_json(buffer.str());
}

void save_synth_spec(const std::filesystem::path& path, const SynthSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << synth_spec_to_json(spec);
}

SynthDataset generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_sensors;
  const std::size_t total = kBurnIn + spec.t_train + spec.t_test;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  // Per-sensor shape parameters are drawn before any noise so they do not
  // depend on the series length.
  std::vector<double> level(n), amplitude(n), period(n), phase(n);
  for (std::size_t i = 0; i < n; ++i) {
    level[i] = -2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    amplitude[i] = 0.5 + uniform(rng);
    period[i] = 20.0 + 60.0 * uniform(rng);
    phase[i] = 2.0 * std::numbers::pi * uniform(rng);
  }

  std::vector<std::vector<const SynthEdge*>> incoming(n);
  for (const auto& e : spec.edges) incoming[e.driven].push_back(&e);
  const std::vector<std::size_t> order = topological_order(n, spec.edges);

  std::vector<std::vector<double>> x(n, std::vector<double>(total, 0.0));
  std::vector<double> ar(n, 0.0);
  for (std::size_t t = 0; t < total; ++t) {
    for (std::size_t i : order) {
      const double eps = spec.noise_sigma * normal(rng);
      if (incoming[i].empty()) {
        ar[i] = kArCoefficient * ar[i] + eps;
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / period[i] + phase[i];
        x[i][t] = level[i] + amplitude[i] * std::sin(angle) + ar[i];
      } else {
        double acc = 0.0;
        for (const SynthEdge* e : incoming[i]) {
          if (t >= e->lag) acc += e->weight * x[e->driver][t - e->lag];
        }
        x[i][t] = acc + eps;
      }
    }
  }

  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(sensor_name(i));
  SynthDataset out;
  out.edges = spec.edges;
  out.train = RawSeries::with_shape(names, spec.t_train);
  out.test = RawSeries::with_shape(names, spec.t_test);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < spec.t_train; ++t) out.train.value(i, t) = x[i][kBurnIn + t];
    for (std::size_t t = 0; t < spec.t_test; ++t) {
      out.test.value(i, t) = x[i][kBurnIn + spec.t_train + t];
    }
  }

  std::vector<double> train_std(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = out.train.sensor(i);
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    train_std[i] = std::sqrt(var / static_cast<double>(s.size()));
  }

  // Injections read the clean series so overlapping segments do not compound.
  const RawSeries clean = out.test;
  std::vector<int> labels(spec.t_test, 0);
  for (const auto& seg : spec.anomalies) {
    for (std::size_t t = seg.start; t < seg.start + seg.length; ++t) {
      labels[t] = 1;
      for (std::size_t s : seg.sensors) {
        double& reported = out.test.value(s, t);
        switch (seg.type) {
          case InjectionType::kOffset:
            reported = clean.value(s, t) + seg.magnitude * train_std[s];
            break;
          case InjectionType::kFreeze:
            reported = seg.start == 0 ? x[s][kBurnIn + spec.t_train - 1] : clean.value(s, seg.start - 1);
            break;
          case InjectionType::kSwap:
            reported = clean.value(seg.swap_source, t);
            break;
        }
      }
    }
  }
  out.test.labels = std::move(labels);
  return out;
}

void write_ground_truth_edges(const std::filesystem::path& path, const std::vector<SynthEdge>& edges) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# driver driven lag weight\n";
  for (const auto& e : edges) {
    out << e.driver << ' ' << e.driven << ' ' << e.lag << ' ' << format_double(e.weight) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace ecnu
