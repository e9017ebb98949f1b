#include "ecnu/model.hpp"

#include <cmath>
#include <random>

#include "ecnu/data.hpp"
#include "ecnu/error.hpp"

namespace ecnu {
namespace {

Tensor apply(Tape& tape, Activation a, const Tensor& x) {
  return a == Activation::kRelu ? ops::relu(tape, x) : x;
}

Tensor linear(Tape& tape, const Linear& layer, const Tensor& x) {
  return ops::add_bias(tape, ops::matmul(tape, x, layer.weight), layer.bias);
}

Tensor uniform_parameter(std::mt19937_64& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(element_count(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Linear make_linear(std::mt19937_64& rng, std::size_t in, std::size_t out) {
  Linear l;
  l.weight = uniform_parameter(rng, {in, out}, in);
  l.bias = uniform_parameter(rng, {out}, in);
  return l;
}

Linear clone(const Linear& l) { return {l.weight.clone(), l.bias.clone()}; }

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "identity"; }

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ContractError("unknown activation '" + std::string(name) + "'");
}

void ModelConfig::validate(std::size_t n_sensors) const {
  if (window == 0 || top_k == 0 || embed_dim == 0 || feature_dim == 0 || ecnum_layers == 0 ||
      ncrm_layers == 0) {
    throw ContractError("model sizes must all be positive");
  }
  if (!(embed_init_scale > 0.0) || !std::isfinite(embed_init_scale)) {
    throw ContractError("embed_init_scale must be positive and finite");
  }
  if (n_sensors < 2) throw ContractError("need at least 2 sensors");
  if (top_k + 1 > n_sensors) {
    throw ContractError("top_k=" + std::to_string(top_k) + " needs more than " +
                        std::to_string(n_sensors) + " sensors");
  }
}

ModelConfig ModelConfig::profile(std::string_view name) {
  ModelConfig c;
  if (name == "swat") {
    c = {5, 30, 128, 256, 4, 4};
  } else if (name == "wadi") {
    c = {5, 30, 128, 256, 3, 4};
  } else if (name == "psm") {
    c = {3, 25, 128, 128, 1, 2};
  } else if (name == "synth") {
    c = {5, 5, 16, 32, 2, 2};
  } else {
    throw ContractError("unknown profile '" + std::string(name) + "'");
  }
  return c;
}

ModelParams ModelParams::init(const ModelConfig& config, std::size_t n_nodes, std::uint64_t seed) {
  config.validate(n_nodes);
  const std::size_t w = config.window, df = config.feature_dim, de = config.embed_dim;
  std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL);
  ModelParams p;
  p.config = config;
  p.n_nodes = n_nodes;
  p.encoder = make_linear(rng, w, df);
  const std::size_t fan_in = df + 2 * de;
  p.ecnum_input.feature_weight = uniform_parameter(rng, {df, df}, fan_in);
  p.ecnum_input.target_weight = uniform_parameter(rng, {de, df}, fan_in);
  p.ecnum_input.source_weight = uniform_parameter(rng, {de, df}, fan_in);
  p.ecnum_input.bias = uniform_parameter(rng, {df}, fan_in);
  for (std::size_t l = 1; l < config.ecnum_layers; ++l) p.ecnum_hidden.push_back(make_linear(rng, df, df));
  for (std::size_t l = 0; l < config.ncrm_layers; ++l) {
    p.ncrm_hidden.push_back(make_linear(rng, l == 0 ? df + de : df, df));
  }
  p.ncrm_output = make_linear(rng, df, 1);
  p.embeddings = init_embeddings(n_nodes, de, seed, config.embed_init_scale);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("encoder.weight", encoder.weight);
  out.emplace_back("encoder.bias", encoder.bias);
  out.emplace_back("ecnum.0.feature_weight", ecnum_input.feature_weight);
  out.emplace_back("ecnum.0.target_weight", ecnum_input.target_weight);
  out.emplace_back("ecnum.0.source_weight", ecnum_input.source_weight);
  out.emplace_back("ecnum.0.bias", ecnum_input.bias);
  for (std::size_t l = 0; l < ecnum_hidden.size(); ++l) {
    out.emplace_back("ecnum." + std::to_string(l + 1) + ".weight", ecnum_hidden[l].weight);
    out.emplace_back("ecnum." + std::to_string(l + 1) + ".bias", ecnum_hidden[l].bias);
  }
  for (std::size_t l = 0; l < ncrm_hidden.size(); ++l) {
    out.emplace_back("ncrm." + std::to_string(l) + ".weight", ncrm_hidden[l].weight);
    out.emplace_back("ncrm." + std::to_string(l) + ".bias", ncrm_hidden[l].bias);
  }
  out.emplace_back("ncrm.output.weight", ncrm_output.weight);
  out.emplace_back("ncrm.output.bias", ncrm_output.bias);
  out.emplace_back("embeddings", embeddings);
  return out;
}

std::vector<Tensor> ModelParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.size();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams p;
  p.config = config;
  p.n_nodes = n_nodes;
  p.encoder = ecnu::clone(encoder);
  p.ecnum_input = {ecnum_input.feature_weight.clone(), ecnum_input.target_weight.clone(),
                   ecnum_input.source_weight.clone(), ecnum_input.bias.clone()};
  for (const auto& l : ecnum_hidden) p.ecnum_hidden.push_back(ecnu::clone(l));
  for (const auto& l : ncrm_hidden) p.ncrm_hidden.push_back(ecnu::clone(l));
  p.ncrm_output = ecnu::clone(ncrm_output);
  p.embeddings = embeddings.clone();
  return p;
}

void ModelParams::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& config,
                                                            std::size_t n_nodes) {
  const std::size_t w = config.window, df = config.feature_dim, de = config.embed_dim;
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("encoder.weight", Shape{w, df});
  out.emplace_back("encoder.bias", Shape{df});
  out.emplace_back("ecnum.0.feature_weight", Shape{df, df});
  out.emplace_back("ecnum.0.target_weight", Shape{de, df});
  out.emplace_back("ecnum.0.source_weight", Shape{de, df});
  out.emplace_back("ecnum.0.bias", Shape{df});
  for (std::size_t l = 1; l < config.ecnum_layers; ++l) {
    out.emplace_back("ecnum." + std::to_string(l) + ".weight", Shape{df, df});
    out.emplace_back("ecnum." + std::to_string(l) + ".bias", Shape{df});
  }
  for (std::size_t l = 0; l < config.ncrm_layers; ++l) {
    out.emplace_back("ncrm." + std::to_string(l) + ".weight", Shape{l == 0 ? df + de : df, df});
    out.emplace_back("ncrm." + std::to_string(l) + ".bias", Shape{df});
  }
  out.emplace_back("ncrm.output.weight", Shape{df, 1});
  out.emplace_back("ncrm.output.bias", Shape{1});
  out.emplace_back("embeddings", Shape{n_nodes, de});
  return out;
}

std::size_t expected_parameter_count(const ModelConfig& c, std::size_t n_nodes) {
  const std::size_t w = c.window, df = c.feature_dim, de = c.embed_dim;
  return (w * df + df) + ((df + 2 * de) * df + df) + (c.ecnum_layers - 1) * (df * df + df) +
         ((df + de) * df + df) + (c.ncrm_layers - 1) * (df * df + df) + (df + 1) + n_nodes * de;
}

std::size_t comparative_parameter_count(const ModelConfig& c, std::size_t n_nodes,
                                        std::size_t n_edges) {
  const std::size_t w = c.window, df = c.feature_dim, de = c.embed_dim;
  return (w * df + df) + n_edges * c.ecnum_layers * (df * df + df) + ((df + de) * df + df) +
         (c.ncrm_layers - 1) * (df * df + df) + (df + 1) + n_nodes * de;
}

EdgeList EdgeList::with_self_loops(const Adjacency& adjacency) {
  EdgeList edges;
  edges.n_nodes = adjacency.n_nodes();
  for (std::size_t i = 0; i < adjacency.n_nodes(); ++i) {
    edges.target.push_back(i);
    edges.source.push_back(i);
    for (std::size_t j : adjacency.neighbors[i]) {
      if (j == i) throw ContractError("adjacency stores a self-loop at node " + std::to_string(i));
      if (j >= adjacency.n_nodes()) throw IndexError("adjacency source " + std::to_string(j) + " out of range");
      edges.target.push_back(i);
      edges.source.push_back(j);
    }
  }
  return edges;
}

// ---------------------------------------------------------------------------

Tensor encode(Tape& tape, const ModelParams& params, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != params.config.window) {
    throw DimensionError("encoder expects rows of width " + std::to_string(params.config.window) +
                         ", got " + to_string(x.shape()));
  }
  return linear(tape, params.encoder, x);
}

Tensor ecnum_transform(Tape& tape, const ModelParams& params, const Tensor& source_features,
                       const Tensor& target_embeddings, const Tensor& source_embeddings) {
  const auto& c = params.config;
  if (source_features.cols() != c.feature_dim || target_embeddings.cols() != c.embed_dim ||
      source_embeddings.cols() != c.embed_dim) {
    throw DimensionError("ecnum inputs " + to_string(source_features.shape()) + ", " +
                         to_string(target_embeddings.shape()) + ", " +
                         to_string(source_embeddings.shape()) + " do not match d_f=" +
                         std::to_string(c.feature_dim) + ", d_e=" + std::to_string(c.embed_dim));
  }
  const Tensor inputs[] = {source_features, target_embeddings, source_embeddings};
  const Tensor u = ops::concat(tape, inputs, 1);
  const Tensor blocks[] = {params.ecnum_input.feature_weight, params.ecnum_input.target_weight,
                           params.ecnum_input.source_weight};
  const Tensor w = ops::concat(tape, blocks, 0);
  Tensor h = ops::add_bias(tape, ops::matmul(tape, u, w), params.ecnum_input.bias);
  for (const auto& layer : params.ecnum_hidden) {
    h = linear(tape, layer, apply(tape, c.hidden_activation, h));
  }
  return h;
}

Tensor ecnum_condition(Tape& tape, const ModelParams& params, const EdgeList& edges) {
  const Tensor target_proj = ops::matmul(tape, params.embeddings, params.ecnum_input.target_weight);
  const Tensor source_proj = ops::matmul(tape, params.embeddings, params.ecnum_input.source_weight);
  const Tensor cond = ops::add(tape, ops::gather_rows(tape, target_proj, edges.target),
                               ops::gather_rows(tape, source_proj, edges.source));
  return ops::add_bias(tape, cond, params.ecnum_input.bias);
}

Tensor ecnum_edges(Tape& tape, const ModelParams& params, const Tensor& z, const EdgeList& edges,
                   std::size_t batch) {
  const std::size_t n = edges.n_nodes, e = edges.size();
  if (z.rank() != 2 || z.rows() != batch * n || z.cols() != params.config.feature_dim) {
    throw DimensionError("ecnum_edges expects " + std::to_string(batch * n) + "x" +
                         std::to_string(params.config.feature_dim) + " features, got " +
                         to_string(z.shape()));
  }
  Tensor cond = ecnum_condition(tape, params, edges);
  std::vector<std::size_t> source_rows(batch * e);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < e; ++k) source_rows[b * e + k] = b * n + edges.source[k];
  }
  if (batch > 1) {
    std::vector<std::size_t> tile(batch * e);
    for (std::size_t r = 0; r < tile.size(); ++r) tile[r] = r % e;
    cond = ops::gather_rows(tape, cond, tile);
  }
  const Tensor zs = ops::gather_rows(tape, z, source_rows);
  Tensor h = ops::add(tape, ops::matmul(tape, zs, params.ecnum_input.feature_weight), cond);
  for (const auto& layer : params.ecnum_hidden) {
    h = linear(tape, layer, apply(tape, params.config.hidden_activation, h));
  }
  return h;
}

Tensor aggregate(Tape& tape, const Tensor& transformed, const EdgeList& edges, std::size_t batch,
                 Activation activation) {
  const std::size_t n = edges.n_nodes, e = edges.size();
  if (transformed.rows() != batch * e) {
    throw DimensionError("aggregate expects " + std::to_string(batch * e) + " edge rows, got " +
                         to_string(transformed.shape()));
  }
  std::vector<std::size_t> contributions(n, 0);
  std::vector<bool> has_self(n, false);
  for (std::size_t k = 0; k < e; ++k) {
    ++contributions[edges.target[k]];
    if (edges.target[k] == edges.source[k]) has_self[edges.target[k]] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!has_self[i]) throw ContractError("target " + std::to_string(i) + " has no self-edge");
    if (contributions[i] != contributions[0]) {
      throw ContractError("targets receive unequal numbers of contributions");
    }
  }
  std::vector<std::size_t> segments(batch * e);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < e; ++k) segments[b * e + k] = b * n + edges.target[k];
  }
  return apply(tape, activation, ops::segment_sum(tape, transformed, segments, batch * n));
}

Tensor ncrm_readout(Tape& tape, const ModelParams& params, const Tensor& z) {
  const std::size_t n = params.n_nodes;
  if (z.rank() != 2 || z.cols() != params.config.feature_dim || z.rows() % n != 0) {
    throw DimensionError("readout expects rows of width " + std::to_string(params.config.feature_dim) +
                         " in multiples of " + std::to_string(n) + ", got " + to_string(z.shape()));
  }
  std::vector<std::size_t> ids(z.rows());
  for (std::size_t r = 0; r < ids.size(); ++r) ids[r] = r % n;
  const Tensor parts[] = {z, ops::gather_rows(tape, params.embeddings, ids)};
  Tensor h = ops::concat(tape, parts, 1);
  for (const auto& layer : params.ncrm_hidden) {
    h = apply(tape, params.config.hidden_activation, linear(tape, layer, h));
  }
  return linear(tape, params.ncrm_output, h);
}

Tensor forward(Tape& tape, const ModelParams& params, const Tensor& x, const Adjacency& adjacency) {
  const std::size_t n = params.n_nodes;
  if (adjacency.n_nodes() != n) {
    throw DimensionError("adjacency has " + std::to_string(adjacency.n_nodes()) +
                         " nodes, model has " + std::to_string(n));
  }
  if (x.rank() != 2 || x.rows() % n != 0) {
    throw DimensionError("forward expects a multiple of " + std::to_string(n) + " rows, got " +
                         to_string(x.shape()));
  }
  const std::size_t batch = x.rows() / n;
  const EdgeList edges = EdgeList::with_self_loops(adjacency);
  const Tensor z = encode(tape, params, x);
  const Tensor transformed = ecnum_edges(tape, params, z, edges, batch);
  const Tensor updated =
      aggregate(tape, transformed, edges, batch, params.config.aggregate_activation);
  return ncrm_readout(tape, params, updated);
}

Tensor stack_inputs(const WindowedDataset& data, std::span<const std::size_t> indices) {
  const std::size_t n = data.n_sensors(), w = data.window();
  std::vector<double> x(indices.size() * n * w);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    data.copy_input(indices[b], std::span<double>(x.data() + b * n * w, n * w));
  }
  return Tensor::from({indices.size() * n, w}, std::move(x));
}

Tensor stack_targets(const WindowedDataset& data, std::span<const std::size_t> indices) {
  const std::size_t n = data.n_sensors();
  std::vector<double> y(indices.size() * n);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    data.copy_target(indices[b], std::span<double>(y.data() + b * n, n));
  }
  return Tensor::from({indices.size() * n, 1}, std::move(y));
}

std::vector<double> predict(const ModelParams& params, std::span<const double> window) {
  const std::size_t n = params.n_nodes, w = params.config.window;
  if (window.size() != n * w) {
    throw DimensionError("window has " + std::to_string(window.size()) + " values, expected " +
                         std::to_string(n) + "x" + std::to_string(w));
  }
  Tape tape(false);
  const Tensor x = Tensor::from({n, w}, std::vector<double>(window.begin(), window.end()));
  const Tensor out = forward(tape, params, x, extract_graph(params.embeddings, params.config.top_k));
  return {out.data().begin(), out.data().end()};
}

std::vector<std::vector<double>> predict_all(const ModelParams& params, const WindowedDataset& data,
                                             std::size_t batch_size) {
  if (data.n_sensors() != params.n_nodes || data.window() != params.config.window) {
    throw DimensionError("dataset (" + std::to_string(data.n_sensors()) + " sensors, window " +
                         std::to_string(data.window()) + ") does not match the model");
  }
  const Adjacency adjacency = extract_graph(params.embeddings, params.config.top_k);
  const std::size_t n = params.n_nodes;
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t first = 0; first < data.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - first);
    idx.resize(count);
    for (std::size_t b = 0; b < count; ++b) idx[b] = first + b;
    Tape tape(false);
    const Tensor pred = forward(tape, params, stack_inputs(data, idx), adjacency);
    const auto pd = pred.data();
    for (std::size_t b = 0; b < count; ++b) {
      out.emplace_back(pd.begin() + static_cast<std::ptrdiff_t>(b * n),
                       pd.begin() + static_cast<std::ptrdiff_t>((b + 1) * n));
    }
  }
  return out;
}

}  // namespace ecnu
