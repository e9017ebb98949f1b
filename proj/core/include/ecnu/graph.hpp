#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ecnu/tensor.hpp"

namespace ecnu {

/// Directed top-k graph. `neighbors[i]` lists the k source nodes feeding
/// target i, most similar first. Self-loops are not stored; aggregation adds them.
struct Adjacency {
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> neighbors;

  std::size_t n_nodes() const { return neighbors.size(); }
  bool operator==(const Adjacency&) const = default;
};

/// Dense N x N cosine similarities, row-major.
struct SimilarityMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

/// N x d_e table of scale * standard-normal rows wrapped as a trainable parameter.
Tensor init_embeddings(std::size_t n, std::size_t dim, std::uint64_t seed, double scale = 1.0);

SimilarityMatrix cosine_matrix(const Tensor& embeddings);

/// For each target, the k most similar other nodes. Ties go to the lower id.
Adjacency topk_adjacency(const SimilarityMatrix& similarity, std::size_t k);

inline Adjacency extract_graph(const Tensor& embeddings, std::size_t k) {
  return topk_adjacency(cosine_matrix(embeddings), k);
}

/// One "target source similarity" line per edge.
void write_adjacency(const std::filesystem::path& path, const Adjacency& adjacency,
                     const SimilarityMatrix& similarity);

}  // namespace ecnu
