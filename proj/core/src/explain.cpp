#include "ecnu/explain.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ecnu/data.hpp"
#include "ecnu/error.hpp"

namespace ecnu {
namespace {

double total(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

Reassignment fold(std::span<const double> feature, double mass) {
  Reassignment r;
  const double feature_mass = total(feature);
  if (feature_mass != 0.0) {
    const double scale = mass / feature_mass + 1.0;
    r.relevance.reserve(feature.size());
    for (double x : feature) r.relevance.push_back(scale * x);
    return r;
  }
  r.relevance.assign(feature.begin(), feature.end());
  if (mass != 0.0 && !feature.empty()) {
    const double share = mass / static_cast<double>(feature.size());
    for (double& x : r.relevance) x += share;
    r.fallback = true;
  }
  return r;
}

struct Dense {
  std::vector<double> weight;  // in x out
  std::span<const double> bias;
  std::size_t in = 0, out = 0;

  DenseWeights view() const { return {weight, in, out}; }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(bias.begin(), bias.end());
    for (std::size_t j = 0; j < out; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += x[i] * weight[i * out + j];
      y[j] += acc;
    }
    return y;
  }
};

Dense dense(const Linear& l) {
  return {std::vector<double>(l.weight.data().begin(), l.weight.data().end()), l.bias.data(),
          l.weight.shape()[0], l.weight.shape()[1]};
}

void activate(Activation a, std::vector<double>& v) {
  if (a == Activation::kRelu) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
  }
}

/// Layer stack with every layer input recorded for the backward pass.
struct Trace {
  std::vector<std::vector<double>> inputs;
  std::vector<double> output;
};

Trace run_stack(const std::vector<Dense>& layers, std::vector<double> x, Activation hidden,
                bool activate_last) {
  Trace t;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    t.inputs.push_back(x);
    x = layers[l].apply(x);
    if (l + 1 < layers.size() || activate_last) activate(hidden, x);
  }
  t.output = std::move(x);
  return t;
}

std::vector<double> relevance_through(const std::vector<Dense>& layers, const Trace& trace,
                                      std::vector<double> relevance, double epsilon) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    relevance = lrp_linear(layers[l].view(), trace.inputs[l], relevance, epsilon);
  }
  return relevance;
}

}  // namespace

std::vector<double> lrp_linear(const DenseWeights& layer, std::span<const double> input,
                               std::span<const double> output_relevance, double epsilon) {
  if (input.size() != layer.in) {
    throw ContractError("lrp_linear needs the cached layer input (" + std::to_string(layer.in) +
                        " values), got " + std::to_string(input.size()));
  }
  if (output_relevance.size() != layer.out || layer.weight.size() != layer.in * layer.out) {
    throw DimensionError("lrp_linear relevance/weight sizes do not match the layer");
  }
  std::vector<double> z(layer.out, 0.0);
  for (std::size_t j = 0; j < layer.in; ++j) {
    for (std::size_t k = 0; k < layer.out; ++k) z[k] += input[j] * layer.weight[j * layer.out + k];
  }
  std::vector<double> ratio(layer.out);
  for (std::size_t k = 0; k < layer.out; ++k) {
    const double stabilized = z[k] + epsilon * (z[k] >= 0.0 ? 1.0 : -1.0);
    ratio[k] = output_relevance[k] / stabilized;
  }
  std::vector<double> r(layer.in, 0.0);
  for (std::size_t j = 0; j < layer.in; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < layer.out; ++k) acc += layer.weight[j * layer.out + k] * ratio[k];
    r[j] = input[j] * acc;
  }
  return r;
}

Reassignment reassign_readout(std::span<const double> feature_relevance,
                              std::span<const double> embedding_relevance) {
  return fold(feature_relevance, total(embedding_relevance));
}

Reassignment reassign_ecnum(std::span<const double> feature_relevance,
                            std::span<const std::vector<double>> source_embedding_relevance,
                            std::span<const std::vector<double>> target_embedding_relevance,
                            std::size_t degree) {
  if (degree == 0) throw ContractError("reassign_ecnum needs a degree >= 1");
  double mass = 0.0;
  for (const auto& r : source_embedding_relevance) mass += total(r);
  for (const auto& r : target_embedding_relevance) mass += total(r);
  return fold(feature_relevance, mass / static_cast<double>(degree));
}

RelevanceMap explain_sensor(const ModelParams& params, const Adjacency& adjacency,
                            std::span<const double> window, std::size_t target_sensor,
                            double epsilon) {
  const auto& cfg = params.config;
  const std::size_t n = params.n_nodes, w = cfg.window, df = cfg.feature_dim, de = cfg.embed_dim;
  if (window.size() != n * w) {
    throw DimensionError("window has " + std::to_string(window.size()) + " values, expected " +
                         std::to_string(n * w));
  }
  if (target_sensor >= n) {
    throw IndexError("sensor " + std::to_string(target_sensor) + " out of range for " +
                     std::to_string(n) + " sensors");
  }
  if (adjacency.n_nodes() != n) throw DimensionError("adjacency does not match the model");
  const EdgeList edges = EdgeList::with_self_loops(adjacency);
  const auto emb = params.embeddings.data();
  const auto embedding = [&](std::size_t i) { return std::span<const double>(emb.data() + i * de, de); };

  // Encoder output: the node representations relevance is summed at.
  const Dense encoder = dense(params.encoder);
  std::vector<std::vector<double>> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = encoder.apply(window.subspan(i * w, w));

  // ECNUM as a plain stack whose first layer is the stacked (d_f + 2 d_e) x d_f matrix.
  std::vector<Dense> ecnum;
  {
    Dense first;
    first.in = df + 2 * de;
    first.out = df;
    for (const Tensor* block : {&params.ecnum_input.feature_weight, &params.ecnum_input.target_weight,
                                &params.ecnum_input.source_weight}) {
      first.weight.insert(first.weight.end(), block->data().begin(), block->data().end());
    }
    first.bias = params.ecnum_input.bias.data();
    ecnum.push_back(std::move(first));
    for (const auto& l : params.ecnum_hidden) ecnum.push_back(dense(l));
  }
  std::vector<Dense> ncrm;
  for (const auto& l : params.ncrm_hidden) ncrm.push_back(dense(l));
  const Dense readout = dense(params.ncrm_output);

  // Forward for the edges into the target.
  const std::size_t t = target_sensor;
  std::vector<std::size_t> incoming;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges.target[e] == t) incoming.push_back(e);
  }
  std::vector<Trace> edge_traces;
  std::vector<double> pre(df, 0.0);
  for (std::size_t e : incoming) {
    const std::size_t j = edges.source[e];
    std::vector<double> u(z[j]);
    const auto vt = embedding(t), vj = embedding(j);
    u.insert(u.end(), vt.begin(), vt.end());
    u.insert(u.end(), vj.begin(), vj.end());
    edge_traces.push_back(run_stack(ecnum, std::move(u), cfg.hidden_activation, false));
    for (std::size_t c = 0; c < df; ++c) pre[c] += edge_traces.back().output[c];
  }
  std::vector<double> post = pre;
  activate(cfg.aggregate_activation, post);
  std::vector<double> c0(post);
  const auto vt = embedding(t);
  c0.insert(c0.end(), vt.begin(), vt.end());
  const Trace ncrm_trace = run_stack(ncrm, std::move(c0), cfg.hidden_activation, true);

  RelevanceMap map;
  map.target_sensor = t;
  map.node.assign(n, 0.0);

  // Readout: seed 1 at the prediction, back to [post, v_t], fold in v_t.
  const double seed[] = {1.0};
  std::vector<double> r = lrp_linear(readout.view(), ncrm_trace.output, seed, epsilon);
  r = relevance_through(ncrm, ncrm_trace, std::move(r), epsilon);
  const Reassignment readout_fold =
      reassign_readout(std::span<const double>(r).first(df), std::span<const double>(r).subspan(df));
  map.fallback_used |= readout_fold.fallback;
  const std::vector<double>& r_pre = readout_fold.relevance;

  // Aggregation: share by each edge's contribution to the pre-activation sum.
  std::vector<std::vector<double>> feature(n, std::vector<double>(df, 0.0));
  std::vector<std::vector<std::vector<double>>> as_source(n), as_target(n);
  std::vector<double> edge_relevance(edges.size(), 0.0);
  for (std::size_t q = 0; q < incoming.size(); ++q) {
    const std::size_t e = incoming[q], j = edges.source[e];
    const Trace& trace = edge_traces[q];
    std::vector<double> r_edge(df);
    for (std::size_t c = 0; c < df; ++c) {
      const double stabilized = pre[c] + epsilon * (pre[c] >= 0.0 ? 1.0 : -1.0);
      r_edge[c] = trace.output[c] / stabilized * r_pre[c];
    }
    edge_relevance[e] = total(r_edge);
    const std::vector<double> r_u = relevance_through(ecnum, trace, std::move(r_edge), epsilon);
    for (std::size_t c = 0; c < df; ++c) feature[j][c] += r_u[c];
    as_target[t].emplace_back(r_u.begin() + static_cast<std::ptrdiff_t>(df),
                              r_u.begin() + static_cast<std::ptrdiff_t>(df + de));
    as_source[j].emplace_back(r_u.begin() + static_cast<std::ptrdiff_t>(df + de), r_u.end());
  }

  // Fold embedding relevance into each node's feature relevance, then sum per node.
  std::vector<std::size_t> degree(n, 0);
  for (std::size_t e = 0; e < edges.size(); ++e) ++degree[edges.target[e]];
  for (std::size_t i = 0; i < n; ++i) {
    const Reassignment folded = reassign_ecnum(feature[i], as_source[i], as_target[i], degree[i]);
    map.fallback_used |= folded.fallback;
    map.node[i] = total(folded.relevance);
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    map.edges.push_back({edges.target[e], edges.source[e], edge_relevance[e]});
  }
  return map;
}

RelevanceMap explain_sensor(const ModelParams& params, std::span<const double> window,
                            std::size_t target_sensor, double epsilon) {
  return explain_sensor(params, extract_graph(params.embeddings, params.config.top_k), window,
                        target_sensor, epsilon);
}

void export_relevance_graph(const std::filesystem::path& path, const RelevanceMap& map,
                            const Adjacency& adjacency, std::span<const std::string> sensor_names) {
  const std::size_t n = adjacency.n_nodes();
  if (map.node.size() != n) throw DimensionError("relevance map does not match the adjacency");
  std::vector<double> weight(n * n, 0.0);
  for (const auto& e : map.edges) weight[e.target * n + e.source] = e.relevance;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# ecnu relevance graph\n";
  out << "# time " << map.time << '\n';
  out << "# target " << map.target_sensor << '\n';
  out << "# nodes " << n << '\n';
  out << "# columns: target source weight\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : adjacency.neighbors[i]) {
      out << i << ' ' << j << ' ' << format_double(weight[i * n + j]) << '\n';
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out << i << ' ' << i << ' ' << format_double(weight[i * n + i]) << '\n';
  }
  for (std::size_t i = 0; i < n; ++i) {
    out << "node " << i << ' ' << format_double(map.node[i]);
    if (i < sensor_names.size()) out << ' ' << sensor_names[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

RelevanceGraphFile read_relevance_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  RelevanceGraphFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "time") ls >> file.time;
      if (key == "target") ls >> file.target;
      if (key == "nodes") ls >> file.n_nodes;
      continue;
    }
    if (line.rfind("node ", 0) == 0) {
      std::string tag;
      std::size_t id = 0;
      std::string value;
      if (!(ls >> tag >> id >> value)) throw ParseError("malformed node line", line_no);
      if (file.node.size() <= id) file.node.resize(id + 1, 0.0);
      file.node[id] = std::stod(value);
      continue;
    }
    EdgeRelevance e;
    std::string value;
    if (!(ls >> e.target >> e.source >> value)) throw ParseError("malformed edge line", line_no);
    e.relevance = std::stod(value);
    (e.target == e.source ? file.self_edges : file.edges).push_back(e);
  }
  return file;
}

}  // namespace ecnu
