#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "selfcf/data.hpp"
#include "selfcf/numerics.hpp"
#include "selfcf/selfcf.hpp"

namespace selfcf {

enum class Phase { validation, test };

Phase parse_phase(std::string_view name);
std::string_view to_string(Phase phase);

// Fills one score per item for a user. Masking is applied by the caller.
using ScoreFn = std::function<void(std::size_t user, std::span<double> scores)>;

// s(u, i) = h(e_u).e_i + e_u.h(e_i)
ScoreFn cross_prediction_scorer(const DenseMatrix& users, const DenseMatrix& items,
                                const Predictor& predictor);
// s(u, i) = e_u.e_i
ScoreFn inner_product_scorer(const DenseMatrix& users, const DenseMatrix& items);
// Training-set item popularity, the same for every user.
ScoreFn popularity_scorer(const InteractionDataset& dataset);

// Cross-prediction scores for one user with `masked` items set to -inf.
std::vector<double> score_user(std::size_t user, const DenseMatrix& users,
                               const DenseMatrix& items, const Predictor& predictor,
                               std::span<const std::size_t> masked);

// The k best items, score descending then item index ascending. Items
// scored -inf never appear.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

// `truth` must be sorted and non-empty.
double recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                   std::size_t k);
double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                 std::size_t k);

struct EvalOptions {
  std::vector<std::size_t> ks{20, 50};
  Phase phase = Phase::test;
  // Lower edges of the training-degree buckets: [1-5], [6-10], [11-20],
  // [21-50], [51+].
  std::vector<std::size_t> bucket_edges{1, 6, 11, 21, 51};
};

struct UserMetrics {
  std::size_t user = 0;
  std::size_t train_degree = 0;
  std::size_t candidates = 0;  // items ranked, i.e. num_items minus masked
  std::vector<double> recall;  // per K
  std::vector<double> ndcg;
};

struct BucketReport {
  std::size_t lower = 0;
  std::size_t upper = 0;  // inclusive; 0 means unbounded
  std::size_t users = 0;
  double share = 0.0;
  std::vector<double> recall;  // per K
  std::vector<double> ndcg;

  std::string label() const;
};

struct MetricsReport {
  Phase phase = Phase::test;
  std::vector<std::size_t> ks;
  std::vector<double> recall;
  std::vector<double> ndcg;
  std::size_t evaluated_users = 0;
  std::size_t total_candidates = 0;
  std::vector<BucketReport> buckets;
  std::vector<UserMetrics> per_user;
  std::uint64_t seed = 0;
  std::string config_hash;

  double recall_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

// All-ranking evaluation over every user with non-empty ground truth in the
// phase. Validation masks training items; test masks training and
// validation items.
MetricsReport evaluate(const InteractionDataset& dataset, const ScoreFn& scorer,
                       const EvalOptions& options = {});

std::vector<BucketReport> degree_bucket_report(const std::vector<UserMetrics>& per_user,
                                               std::size_t num_ks,
                                               const std::vector<std::size_t>& edges);

// Mean validation Recall@k, the early-stopping signal.
double validation_recall(const InteractionDataset& dataset, const ScoreFn& scorer, std::size_t k);

nlohmann::ordered_json to_json(const MetricsReport& report);
// Rows of phase,k,bucket,metric,value; bucket "all" is the overall mean.
std::string to_csv(const MetricsReport& report, bool header = true);

}  // namespace selfcf
