#include <gtest/gtest.h>

#include <filesystem>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ecnu/error.hpp"
#include "ecnu/synth.hpp"

namespace ecnu {
namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.n_sensors = 3;
  s.t_train = 200;
  s.t_test = 100;
  s.edges = {{0, 1, 1, 1.0}};
  s.noise_sigma = 0.0;
  s.seed = 5;
  return s;
}

TEST(Synth, ZeroNoiseLagOneCopy) {
  const SynthDataset d = generate(small_spec());
  for (std::size_t t = 1; t < d.train.length; ++t) {
    EXPECT_EQ(d.train.value(1, t), d.train.value(0, t - 1));
  }
  EXPECT_EQ(d.test.value(1, 0), d.train.value(0, d.train.length - 1));
}

TEST(Synth, SameSeedSameData) {
  const SynthSpec spec = SynthSpec::acceptance_default(3);
  const SynthDataset a = generate(spec);
  const SynthDataset b = generate(spec);
  EXPECT_EQ(a.train.values, b.train.values);
  EXPECT_EQ(a.test.values, b.test.values);
  EXPECT_EQ(a.test.labels, b.test.labels);
  EXPECT_NE(generate(SynthSpec::acceptance_default(4)).train.values, a.train.values);
}

TEST(Synth, AcceptanceDefaultShape) {
  const SynthSpec spec = SynthSpec::acceptance_default();
  EXPECT_EQ(spec.n_sensors, 10u);
  EXPECT_EQ(spec.t_train, 5000u);
  EXPECT_EQ(spec.t_test, 2000u);
  EXPECT_EQ(spec.edges.size(), 8u);
  bool offset = false, freeze = false, swap = false;
  std::size_t mass = 0;
  for (const auto& seg : spec.anomalies) {
    offset |= seg.type == InjectionType::kOffset;
    freeze |= seg.type == InjectionType::kFreeze;
    swap |= seg.type == InjectionType::kSwap;
    mass += seg.length;
  }
  EXPECT_TRUE(offset && freeze && swap);
  EXPECT_EQ(mass, 100u);
}

TEST(Synth, LabelsMatchSegmentMass) {
  const SynthSpec spec = SynthSpec::acceptance_default();
  const SynthDataset d = generate(spec);
  ASSERT_TRUE(d.test.labels.has_value());
  EXPECT_FALSE(d.train.labels.has_value());
  std::size_t ones = 0;
  for (int l : *d.test.labels) ones += l;
  EXPECT_EQ(ones, 100u);
  for (const auto& seg : spec.anomalies) {
    for (std::size_t t = seg.start; t < seg.start + seg.length; ++t) EXPECT_EQ((*d.test.labels)[t], 1);
  }
}

TEST(Synth, InjectionsOnlyTouchLabeledTicksAndSensors) {
  SynthSpec spec = SynthSpec::acceptance_default();
  const SynthDataset with = generate(spec);
  spec.anomalies.clear();
  const SynthDataset clean = generate(spec);
  EXPECT_EQ(with.train.values, clean.train.values);
  for (std::size_t i = 0; i < spec.n_sensors; ++i) {
    for (std::size_t t = 0; t < spec.t_test; ++t) {
      if ((*with.test.labels)[t] == 0) EXPECT_EQ(with.test.value(i, t), clean.test.value(i, t));
    }
  }
}

TEST(Synth, InjectionSemantics) {
  SynthSpec spec = small_spec();
  spec.noise_sigma = 0.1;
  spec.anomalies = {{10, 5, {0}, InjectionType::kOffset, 2.0, 0},
                    {30, 5, {1}, InjectionType::kFreeze, 0.0, 0},
                    {50, 5, {2}, InjectionType::kSwap, 0.0, 0}};
  const SynthDataset d = generate(spec);
  SynthSpec plain = spec;
  plain.anomalies.clear();
  const SynthDataset c = generate(plain);
  double mean = 0.0, var = 0.0;
  for (double v : c.train.sensor(0)) mean += v;
  mean /= 200.0;
  for (double v : c.train.sensor(0)) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 200.0);
  for (std::size_t t = 10; t < 15; ++t) EXPECT_NEAR(d.test.value(0, t) - c.test.value(0, t), 2.0 * sd, 1e-12);
  for (std::size_t t = 30; t < 35; ++t) EXPECT_EQ(d.test.value(1, t), c.test.value(1, 29));
  for (std::size_t t = 50; t < 55; ++t) EXPECT_EQ(d.test.value(2, t), c.test.value(0, t));
}

TEST(Synth, ValidationRejectsBadSpecs) {
  SynthSpec s = small_spec();
  s.edges.push_back({1, 0, 1, 1.0});
  EXPECT_THROW(generate(s), ContractError);
  s = small_spec();
  s.edges[0].lag = 0;
  EXPECT_THROW(s.validate(), ContractError);
  s = small_spec();
  s.anomalies = {{95, 10, {0}, InjectionType::kOffset, 3.0, 0}};
  EXPECT_THROW(s.validate(), ContractError);
  s = small_spec();
  s.edges[0].driven = 7;
  EXPECT_THROW(s.validate(), ContractError);
  EXPECT_THROW(injection_from_string("melt"), ContractError);
}

TEST(Synth, SpecJsonRoundTrip) {
  const SynthSpec spec = SynthSpec::acceptance_default(9);
  EXPECT_EQ(synth_spec_from_json(synth_spec_to_json(spec)), spec);
  const auto path = std::filesystem::temp_directory_path() / "ecnu_synth_spec.json";
  save_synth_spec(path, spec);
  EXPECT_EQ(load_synth_spec(path), spec);
  std::filesystem::remove(path);
  EXPECT_THROW(synth_spec_from_json("{not json"), ContractError);
  EXPECT_THROW(synth_spec_from_json(R"({"n_sensors": "ten"})"), ContractError);
}

TEST(Synth, GroundTruthEdgeFile) {
  const auto path = std::filesystem::temp_directory_path() / "ecnu_edges.txt";
  const SynthSpec spec = SynthSpec::acceptance_default();
  write_ground_truth_edges(path, spec.edges);
  std::ifstream in(path);
  std::vector<SynthEdge> back;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream f(line);
    SynthEdge e;
    f >> e.driver >> e.driven >> e.lag >> e.weight;
    back.push_back(e);
  }
  EXPECT_EQ(back, spec.edges);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace ecnu
