#include "ecnu/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "ecnu/data.hpp"
#include "ecnu/error.hpp"

namespace ecnu {

Tensor init_embeddings(std::size_t n, std::size_t dim, std::uint64_t seed, double scale) {
  if (n < 2) throw ContractError("embedding table needs at least 2 nodes");
  if (dim < 1) throw ContractError("embedding dimension must be >= 1");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ContractError("embedding scale must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> table(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double v = normal(rng);
        table[i * dim + c] = v;
        norm += v * v;
      }
    } while (std::sqrt(norm) < 1e-8);
  }
  for (double& v : table) v *= scale;
  return Tensor::parameter({n, dim}, std::move(table));
}

SimilarityMatrix cosine_matrix(const Tensor& embeddings) {
  if (embeddings.rank() != 2) {
    throw DimensionError("embeddings must be rank 2, got " + to_string(embeddings.shape()));
  }
  const std::size_t n = embeddings.rows(), d = embeddings.cols();
  const auto v = embeddings.data();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += v[i * d + c] * v[i * d + c];
    norms[i] = std::sqrt(acc);
    if (!(norms[i] > 0.0)) {
      throw ContractError("embedding row " + std::to_string(i) + " is zero; cosine undefined");
    }
  }
  SimilarityMatrix sim{n, std::vector<double>(n * n)};
  for (std::size_t i = 0; i < n; ++i) {
    sim.values[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += v[i * d + c] * v[j * d + c];
      const double e = dot / (norms[i] * norms[j]);
      sim.values[i * n + j] = e;
      sim.values[j * n + i] = e;
    }
  }
  return sim;
}

Adjacency topk_adjacency(const SimilarityMatrix& similarity, std::size_t k) {
  const std::size_t n = similarity.n;
  if (k < 1 || k + 1 > n) {
    throw ContractError("top-k requires 1 <= k <= N-1, got k=" + std::to_string(k) +
                        " for N=" + std::to_string(n));
  }
  Adjacency adj{k, std::vector<std::vector<std::size_t>>(n)};
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) candidates.push_back(j);
    }
    const auto better = [&](std::size_t a, std::size_t b) {
      const double ea = similarity(i, a), eb = similarity(i, b);
      return ea != eb ? ea > eb : a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), better);
    adj.neighbors[i].assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return adj;
}

void write_adjacency(const std::filesystem::path& path, const Adjacency& adjacency,
                     const SimilarityMatrix& similarity) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# target source similarity\n";
  for (std::size_t i = 0; i < adjacency.n_nodes(); ++i) {
    for (std::size_t j : adjacency.neighbors[i]) {
      out << i << ' ' << j << ' ' << format_double(similarity(i, j)) << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace ecnu
