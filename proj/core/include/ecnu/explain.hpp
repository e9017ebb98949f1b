#pragma once

// Layer-wise relevance propagation through a trained detector. Relevance that
// standard LRP would strand on the embedding inputs of the readout and of the
// edge transform is folded back into the feature relevance, then summed per
// node at the encoder output.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ecnu/graph.hpp"
#include "ecnu/model.hpp"

namespace ecnu {

constexpr double kLrpEpsilon = 1e-6;

/// Row-major `in x out` weight matrix view.
struct DenseWeights {
  std::span<const double> weight;
  std::size_t in = 0;
  std::size_t out = 0;
};

/// Epsilon rule: R_in[j] = sum_k x[j] w[j][k] / (z[k] + eps sign(z[k])) R_out[k],
/// where z[k] = sum_j x[j] w[j][k] (bias excluded) and sign(0) = +1.
std::vector<double> lrp_linear(const DenseWeights& layer, std::span<const double> input,
                               std::span<const double> output_relevance,
                               double epsilon = kLrpEpsilon);

struct Reassignment {
  std::vector<double> relevance;
  /// Set when the feature relevance summed to zero and the embedding mass was
  /// spread uniformly instead of rescaled.
  bool fallback = false;
};

/// R_x * (sum(R_v) / sum(R_x) + 1). Conserves sum(R_x) + sum(R_v).
Reassignment reassign_readout(std::span<const double> feature_relevance,
                              std::span<const double> embedding_relevance);

/// R_x * ((1/degree) * sum over edges of (R_source + R_target) / sum(R_x) + 1).
Reassignment reassign_ecnum(std::span<const double> feature_relevance,
                            std::span<const std::vector<double>> source_embedding_relevance,
                            std::span<const std::vector<double>> target_embedding_relevance,
                            std::size_t degree);

struct EdgeRelevance {
  std::size_t target = 0;
  std::size_t source = 0;
  double relevance = 0.0;
};

struct RelevanceMap {
  std::size_t target_sensor = 0;
  std::size_t time = 0;
  std::vector<double> node;
  /// Every edge of the graph including self-edges, target-major, self first.
  std::vector<EdgeRelevance> edges;
  bool fallback_used = false;
};

/// Seeds relevance 1 at the prediction for `target_sensor` on one N x w window.
RelevanceMap explain_sensor(const ModelParams& params, const Adjacency& adjacency,
                            std::span<const double> window, std::size_t target_sensor,
                            double epsilon = kLrpEpsilon);
RelevanceMap explain_sensor(const ModelParams& params, std::span<const double> window,
                            std::size_t target_sensor, double epsilon = kLrpEpsilon);

/// Text edge list: '#' header lines carry time/target/node count; then
/// "target source weight" for the N*k graph edges, "i i weight" self-edge
/// annotations and "node i relevance [name]" lines.
void export_relevance_graph(const std::filesystem::path& path, const RelevanceMap& map,
                            const Adjacency& adjacency,
                            std::span<const std::string> sensor_names = {});

struct RelevanceGraphFile {
  std::size_t time = 0;
  std::size_t target = 0;
  std::size_t n_nodes = 0;
  std::vector<EdgeRelevance> edges;
  std::vector<EdgeRelevance> self_edges;
  std::vector<double> node;
};

RelevanceGraphFile read_relevance_graph(const std::filesystem::path& path);

}  // namespace ecnu
