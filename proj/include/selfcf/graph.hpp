#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "selfcf/data.hpp"
#include "selfcf/numerics.hpp"

namespace selfcf {

// D^{-1/2} A D^{-1/2} over the user-item graph of the training partition.
// Node ids: users first, then items offset by num_users.
struct NormalizedAdjacency {
  SparseMatrix matrix;
  std::vector<std::size_t> degree;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  // Undirected edge id of every stored entry; both directions of an edge
  // share one id so pruning can drop them together.
  std::vector<std::size_t> entry_edge;
  std::size_t num_edges = 0;

  std::size_t num_nodes() const { return num_users + num_items; }
};

NormalizedAdjacency build_normalized_adjacency(const InteractionDataset& dataset);

// Drops each undirected edge with probability rho and rescales survivors by
// 1/(1-rho). Degrees are not recomputed.
SparseMatrix prune_edges(const NormalizedAdjacency& adjacency, double rho, std::uint64_t seed);

}  // namespace selfcf
