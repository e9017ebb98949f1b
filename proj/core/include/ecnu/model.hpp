#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecnu/graph.hpp"
#include "ecnu/tensor.hpp"

namespace ecnu {

class WindowedDataset;

enum class Activation { kRelu, kIdentity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct ModelConfig {
  std::size_t window = 5;
  std::size_t top_k = 30;
  std::size_t embed_dim = 128;
  std::size_t feature_dim = 256;
  std::size_t ecnum_layers = 4;
  std::size_t ncrm_layers = 4;
  /// Applied to the per-target sum of transformed sources.
  Activation aggregate_activation = Activation::kRelu;
  /// Applied between hidden layers of both MLPs.
  Activation hidden_activation = Activation::kRelu;
  /// Embedding rows start as scale * N(0, I). Cosine geometry is scale-free, so this only
  /// sets how far a single optimizer step rotates a row.
  double embed_init_scale = 0.01;

  /// Throws ContractError unless every size is positive and top_k < n_sensors.
  void validate(std::size_t n_sensors) const;

  /// Hyperparameter profiles: "swat", "wadi", "psm" and the small "synth".
  static ModelConfig profile(std::string_view name);

  bool operator==(const ModelConfig&) const = default;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // [out]
};

/// First ECNUM layer, (d_f + 2 d_e) -> d_f, kept as its three row blocks:
/// rows for the source representation, the target embedding and the source embedding.
struct EcnumInputLayer {
  Tensor feature_weight;  // d_f x d_f
  Tensor target_weight;   // d_e x d_f
  Tensor source_weight;   // d_e x d_f
  Tensor bias;            // [d_f]
};

struct ModelParams {
  ModelConfig config;
  std::size_t n_nodes = 0;
  Linear encoder;                    // w -> d_f, shared by all sensors
  EcnumInputLayer ecnum_input;
  std::vector<Linear> ecnum_hidden;  // ecnum_layers - 1 layers, d_f -> d_f
  std::vector<Linear> ncrm_hidden;   // ncrm_layers layers, first (d_f + d_e) -> d_f
  Linear ncrm_output;                // d_f -> 1
  Tensor embeddings;                 // N x d_e

  static ModelParams init(const ModelConfig& config, std::size_t n_nodes, std::uint64_t seed);

  /// Stable order, also the checkpoint order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  ModelParams clone() const;
  void zero_grad();
};

/// Shape every named parameter must have for this config.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& config,
                                                            std::size_t n_nodes);

/// (w d_f + d_f) + [(d_f + 2 d_e) d_f + d_f] + (n_ecnum - 1)(d_f^2 + d_f)
///   + [(d_f + d_e) d_f + d_f] + (n_ncrm - 1)(d_f^2 + d_f) + (d_f + 1) + N d_e
std::size_t expected_parameter_count(const ModelConfig& config, std::size_t n_nodes);

/// Parameter count of the per-edge comparative design: every one of `n_edges`
/// edges owns an `ecnum_layers`-deep stack of d_f -> d_f layers, replacing the
/// shared ECNUM; encoder, readout and embeddings are unchanged.
std::size_t comparative_parameter_count(const ModelConfig& config, std::size_t n_nodes,
                                        std::size_t n_edges);

/// Target-major edge list with each target's self-edge first, then its
/// neighbors in adjacency order.
struct EdgeList {
  std::size_t n_nodes = 0;
  std::vector<std::size_t> target;
  std::vector<std::size_t> source;

  static EdgeList with_self_loops(const Adjacency& adjacency);
  std::size_t size() const { return target.size(); }
};

/// Rows of `x` are per-sensor windows (any number of rows, width w).
Tensor encode(Tape& tape, const ModelParams& params, const Tensor& x);

/// Per-edge transform on explicit inputs: the MLP over concat[z_src, v_target, v_source].
Tensor ecnum_transform(Tape& tape, const ModelParams& params, const Tensor& source_features,
                       const Tensor& target_embeddings, const Tensor& source_embeddings);

/// The same transform for every edge of `batch` stacked windows. `z` holds
/// batch * N rows. The first layer is evaluated block-wise: embedding terms are
/// projected once per node instead of once per edge.
Tensor ecnum_edges(Tape& tape, const ModelParams& params, const Tensor& z, const EdgeList& edges,
                   std::size_t batch);

/// Edge-condition term of the first ECNUM layer, one row per edge:
/// v_target W_target + v_source W_source + b.
Tensor ecnum_condition(Tape& tape, const ModelParams& params, const EdgeList& edges);

/// Sums each target's transformed sources (self included), then applies the
/// aggregate activation. Returns batch * N rows.
Tensor aggregate(Tape& tape, const Tensor& transformed, const EdgeList& edges, std::size_t batch,
                 Activation activation = Activation::kRelu);

/// One prediction per row of `z`; row r belongs to node r % N.
Tensor ncrm_readout(Tape& tape, const ModelParams& params, const Tensor& z);

/// Full forward for `batch` stacked windows (rows = batch * N, width w).
/// Returns batch * N x 1 predictions.
Tensor forward(Tape& tape, const ModelParams& params, const Tensor& x, const Adjacency& adjacency);

/// Stacks windows [first, first + count) of `data` into a (count * N) x w tensor.
Tensor stack_inputs(const WindowedDataset& data, std::span<const std::size_t> indices);
Tensor stack_targets(const WindowedDataset& data, std::span<const std::size_t> indices);

/// Inference on one N x w window (row-major).
std::vector<double> predict(const ModelParams& params, std::span<const double> window);

/// Predictions for every window in `data`, in order; batch-invariant.
std::vector<std::vector<double>> predict_all(const ModelParams& params, const WindowedDataset& data,
                                             std::size_t batch_size = 64);

}  // namespace ecnu
