#pragma once

// Brute-force ranking metrics written independently of the library: full
// sort, set intersection, and the gain formula evaluated term by term.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

namespace selfcf::testing {

inline std::vector<std::size_t> reference_ranking(const std::vector<double>& scores,
                                                  const std::set<std::size_t>& masked) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!masked.count(i)) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline double reference_recall(const std::vector<std::size_t>& ranking,
                               const std::set<std::size_t>& truth, std::size_t k) {
  std::set<std::size_t> top(ranking.begin(), ranking.begin() + std::min(k, ranking.size()));
  std::vector<std::size_t> common;
  std::set_intersection(top.begin(), top.end(), truth.begin(), truth.end(),
                        std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(truth.size());
}

inline double reference_ndcg(const std::vector<std::size_t>& ranking,
                             const std::set<std::size_t>& truth, std::size_t k) {
  double dcg = 0.0;
  for (std::size_t pos = 1; pos <= std::min(k, ranking.size()); ++pos) {
    const double hit = truth.count(ranking[pos - 1]) ? 1.0 : 0.0;
    if (hit > 0.0) dcg += (std::pow(2.0, hit) - 1.0) / std::log2(static_cast<double>(pos) + 1.0);
  }
  double idcg = 0.0;
  for (std::size_t pos = 1; pos <= std::min(k, truth.size()); ++pos) {
    idcg += (std::pow(2.0, 1.0) - 1.0) / std::log2(static_cast<double>(pos) + 1.0);
  }
  return dcg / idcg;
}

}  // namespace selfcf::testing
