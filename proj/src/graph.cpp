#include "selfcf/graph.hpp"

#include <cmath>

#include "selfcf/errors.hpp"
#include "selfcf/rng.hpp"

namespace selfcf {

NormalizedAdjacency build_normalized_adjacency(const InteractionDataset& dataset) {
  if (dataset.train().empty()) throw InvalidParameter("adjacency needs training edges");
  NormalizedAdjacency adj;
  adj.num_users = dataset.num_users();
  adj.num_items = dataset.num_items();
  const std::size_t n = adj.num_nodes();
  const auto& user_items = dataset.train_positives();

  adj.degree.assign(n, 0);
  struct Neighbor {
    std::size_t node;
    std::size_t edge;
  };
  std::vector<std::vector<Neighbor>> item_users(adj.num_items);
  std::size_t edge = 0;
  for (std::size_t u = 0; u < adj.num_users; ++u) {
    adj.degree[u] = user_items[u].size();
    for (std::size_t i : user_items[u]) {
      ++adj.degree[adj.num_users + i];
      item_users[i].push_back({u, edge++});
    }
  }
  adj.num_edges = edge;

  std::vector<std::size_t> offsets;
  std::vector<std::size_t> cols;
  std::vector<double> values;
  offsets.reserve(n + 1);
  cols.reserve(2 * edge);
  values.reserve(2 * edge);
  adj.entry_edge.reserve(2 * edge);
  offsets.push_back(0);

  const auto weight = [&](std::size_t a, std::size_t b) {
    return 1.0 / std::sqrt(static_cast<double>(adj.degree[a]) * static_cast<double>(adj.degree[b]));
  };
  edge = 0;
  for (std::size_t u = 0; u < adj.num_users; ++u) {
    for (std::size_t i : user_items[u]) {
      const std::size_t node = adj.num_users + i;
      cols.push_back(node);
      values.push_back(weight(u, node));
      adj.entry_edge.push_back(edge++);
    }
    offsets.push_back(cols.size());
  }
  for (std::size_t i = 0; i < adj.num_items; ++i) {
    const std::size_t node = adj.num_users + i;
    for (const auto& nb : item_users[i]) {
      cols.push_back(nb.node);
      values.push_back(weight(node, nb.node));
      adj.entry_edge.push_back(nb.edge);
    }
    offsets.push_back(cols.size());
  }
  adj.matrix = SparseMatrix(n, n, std::move(offsets), std::move(cols), std::move(values));
  return adj;
}

SparseMatrix prune_edges(const NormalizedAdjacency& adjacency, double rho, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw InvalidParameter("prune ratio must lie in [0, 1), got " + std::to_string(rho));
  }
  if (rho == 0.0) return adjacency.matrix;

  Rng rng(seed, /*stream=*/0x70727565ULL);
  std::vector<char> keep(adjacency.num_edges);
  for (auto& k : keep) k = rng.bernoulli(rho) ? 0 : 1;

  const double rescale = 1.0 / (1.0 - rho);
  const auto& m = adjacency.matrix;
  const auto offsets = m.row_offsets();
  const auto cols = m.col_indices();
  const auto vals = m.values();
  std::vector<std::size_t> out_offsets{0};
  std::vector<std::size_t> out_cols;
  std::vector<double> out_vals;
  out_offsets.reserve(m.rows() + 1);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
      if (!keep[adjacency.entry_edge[k]]) continue;
      out_cols.push_back(cols[k]);
      out_vals.push_back(vals[k] * rescale);
    }
    out_offsets.push_back(out_cols.size());
  }
  return SparseMatrix(m.rows(), m.cols(), std::move(out_offsets), std::move(out_cols),
                      std::move(out_vals));
}

}  // namespace selfcf
