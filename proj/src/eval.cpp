#include "selfcf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "selfcf/errors.hpp"

namespace selfcf {
namespace {

constexpr double kMasked = -std::numeric_limits<double>::infinity();

std::size_t index_of_k(const std::vector<std::size_t>& ks, std::size_t k) {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw InvalidParameter("K=" + std::to_string(k) + " not in report");
  return static_cast<std::size_t>(it - ks.begin());
}

std::size_t count_hits(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                       std::size_t k) {
  std::size_t hits = 0;
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t r = 0; r < n; ++r) {
    if (std::binary_search(truth.begin(), truth.end(), ranked[r])) ++hits;
  }
  return hits;
}

void check_truth(std::span<const std::size_t> truth) {
  if (truth.empty()) throw InvalidParameter("ground truth set is empty");
}

}  // namespace

Phase parse_phase(std::string_view name) {
  if (name == "validation" || name == "valid") return Phase::validation;
  if (name == "test") return Phase::test;
  throw ConfigError("unknown phase '" + std::string(name) + "'");
}

std::string_view to_string(Phase phase) {
  return phase == Phase::validation ? "validation" : "test";
}

ScoreFn cross_prediction_scorer(const DenseMatrix& users, const DenseMatrix& items,
                                const Predictor& predictor) {
  if (users.cols() != items.cols()) throw InvalidDimension("user and item dims differ");
  struct Tables {
    DenseMatrix users, items, h_users, h_items;
  };
  auto t = std::make_shared<Tables>();
  t->users = users;
  t->items = items;
  t->h_users = predictor_forward(predictor, users);
  t->h_items = predictor_forward(predictor, items);
  return [t](std::size_t user, std::span<double> scores) {
    const auto eu = t->users.row(user);
    const auto hu = t->h_users.row(user);
    for (std::size_t i = 0; i < t->items.rows(); ++i) {
      scores[i] = dot(hu, t->items.row(i)) + dot(eu, t->h_items.row(i));
    }
  };
}

ScoreFn inner_product_scorer(const DenseMatrix& users, const DenseMatrix& items) {
  if (users.cols() != items.cols()) throw InvalidDimension("user and item dims differ");
  auto u = std::make_shared<DenseMatrix>(users);
  auto it = std::make_shared<DenseMatrix>(items);
  return [u, it](std::size_t user, std::span<double> scores) {
    const auto eu = u->row(user);
    for (std::size_t i = 0; i < it->rows(); ++i) scores[i] = dot(eu, it->row(i));
  };
}

ScoreFn popularity_scorer(const InteractionDataset& dataset) {
  auto counts = std::make_shared<std::vector<double>>(dataset.num_items(), 0.0);
  for (const auto& x : dataset.train()) (*counts)[x.item] += 1.0;
  return [counts](std::size_t, std::span<double> scores) {
    std::copy(counts->begin(), counts->end(), scores.begin());
  };
}

std::vector<double> score_user(std::size_t user, const DenseMatrix& users,
                               const DenseMatrix& items, const Predictor& predictor,
                               std::span<const std::size_t> masked) {
  if (user >= users.rows()) throw InvalidIndex("user " + std::to_string(user) + " out of range");
  const DenseMatrix eu = slice_rows(users, user, user + 1);
  const DenseMatrix hu = predictor_forward(predictor, eu);
  const DenseMatrix hi = predictor_forward(predictor, items);
  std::vector<double> scores(items.rows());
  for (std::size_t i = 0; i < items.rows(); ++i) {
    scores[i] = dot(hu.row(0), items.row(i)) + dot(eu.row(0), hi.row(i));
  }
  for (std::size_t i : masked) {
    if (i >= scores.size()) throw InvalidIndex("masked item " + std::to_string(i) + " out of range");
    scores[i] = kMasked;
  }
  return scores;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> candidates;
  candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] != kMasked) candidates.push_back(i);
  }
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t n = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                    candidates.end(), better);
  candidates.resize(n);
  return candidates;
}

double recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                   std::size_t k) {
  check_truth(truth);
  return static_cast<double>(count_hits(ranked, truth, k)) / static_cast<double>(truth.size());
}

double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                 std::size_t k) {
  check_truth(truth);
  double dcg = 0.0;
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t r = 0; r < n; ++r) {
    if (std::binary_search(truth.begin(), truth.end(), ranked[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, truth.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

std::string BucketReport::label() const {
  if (upper == 0) return std::to_string(lower) + "+";
  return std::to_string(lower) + "-" + std::to_string(upper);
}

double MetricsReport::recall_at(std::size_t k) const { return recall[index_of_k(ks, k)]; }
double MetricsReport::ndcg_at(std::size_t k) const { return ndcg[index_of_k(ks, k)]; }

MetricsReport evaluate(const InteractionDataset& dataset, const ScoreFn& scorer,
                       const EvalOptions& options) {
  if (options.ks.empty()) throw InvalidParameter("no K values to evaluate");
  for (std::size_t k : options.ks) {
    if (k == 0) throw InvalidParameter("K must be positive");
  }
  const auto& truth_sets = options.phase == Phase::validation ? dataset.validation_positives()
                                                             : dataset.test_positives();
  const auto& mask_sets = options.phase == Phase::validation ? dataset.train_positives()
                                                            : dataset.seen_positives();
  const std::size_t k_max = *std::max_element(options.ks.begin(), options.ks.end());
  const std::size_t nk = options.ks.size();

  MetricsReport report;
  report.phase = options.phase;
  report.ks = options.ks;
  report.recall.assign(nk, 0.0);
  report.ndcg.assign(nk, 0.0);

  std::vector<double> scores(dataset.num_items());
  for (std::size_t u = 0; u < dataset.num_users(); ++u) {
    const auto& truth = truth_sets[u];
    if (truth.empty()) continue;
    scorer(u, scores);
    for (std::size_t i : mask_sets[u]) scores[i] = kMasked;
    const auto ranked = top_k(scores, k_max);

    UserMetrics m;
    m.user = u;
    m.train_degree = dataset.train_positives()[u].size();
    m.candidates = dataset.num_items() - mask_sets[u].size();
    for (std::size_t k : options.ks) {
      m.recall.push_back(recall_at_k(ranked, truth, k));
      m.ndcg.push_back(ndcg_at_k(ranked, truth, k));
    }
    for (std::size_t j = 0; j < nk; ++j) {
      report.recall[j] += m.recall[j];
      report.ndcg[j] += m.ndcg[j];
    }
    report.total_candidates += m.candidates;
    report.per_user.push_back(std::move(m));
  }
  if (report.per_user.empty()) {
    throw EmptyReport("no user has " + std::string(to_string(options.phase)) + " interactions");
  }
  report.evaluated_users = report.per_user.size();
  const double n = static_cast<double>(report.evaluated_users);
  for (std::size_t j = 0; j < nk; ++j) {
    report.recall[j] /= n;
    report.ndcg[j] /= n;
  }
  report.buckets = degree_bucket_report(report.per_user, nk, options.bucket_edges);
  return report;
}

std::vector<BucketReport> degree_bucket_report(const std::vector<UserMetrics>& per_user,
                                               std::size_t num_ks,
                                               const std::vector<std::size_t>& edges) {
  if (edges.empty()) return {};
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw InvalidParameter("bucket edges must be strictly increasing");
  }
  std::vector<BucketReport> buckets(edges.size());
  for (std::size_t b = 0; b < edges.size(); ++b) {
    buckets[b].lower = edges[b];
    buckets[b].upper = b + 1 < edges.size() ? edges[b + 1] - 1 : 0;
    buckets[b].recall.assign(num_ks, 0.0);
    buckets[b].ndcg.assign(num_ks, 0.0);
  }
  std::size_t placed = 0;
  for (const auto& m : per_user) {
    // Last edge not above the degree; degrees below the first edge are dropped.
    const auto it = std::upper_bound(edges.begin(), edges.end(), m.train_degree);
    if (it == edges.begin()) continue;
    auto& bucket = buckets[static_cast<std::size_t>(it - edges.begin()) - 1];
    ++bucket.users;
    ++placed;
    for (std::size_t j = 0; j < num_ks; ++j) {
      bucket.recall[j] += m.recall[j];
      bucket.ndcg[j] += m.ndcg[j];
    }
  }
  for (auto& bucket : buckets) {
    if (bucket.users == 0) continue;
    const double n = static_cast<double>(bucket.users);
    bucket.share = n / static_cast<double>(placed);
    for (std::size_t j = 0; j < num_ks; ++j) {
      bucket.recall[j] /= n;
      bucket.ndcg[j] /= n;
    }
  }
  return buckets;
}

double validation_recall(const InteractionDataset& dataset, const ScoreFn& scorer, std::size_t k) {
  EvalOptions options;
  options.ks = {k};
  options.phase = Phase::validation;
  options.bucket_edges.clear();
  return evaluate(dataset, scorer, options).recall[0];
}

nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["phase"] = to_string(report.phase);
  j["seed"] = report.seed;
  j["config_hash"] = report.config_hash;
  j["evaluated_users"] = report.evaluated_users;
  j["total_candidates"] = report.total_candidates;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (std::size_t m = 0; m < report.ks.size(); ++m) {
    metrics["recall@" + std::to_string(report.ks[m])] = report.recall[m];
    metrics["ndcg@" + std::to_string(report.ks[m])] = report.ndcg[m];
  }
  j["metrics"] = metrics;
  nlohmann::ordered_json buckets = nlohmann::ordered_json::array();
  for (const auto& b : report.buckets) {
    nlohmann::ordered_json bj;
    bj["bucket"] = b.label();
    bj["users"] = b.users;
    bj["share"] = b.share;
    for (std::size_t m = 0; m < report.ks.size(); ++m) {
      bj["recall@" + std::to_string(report.ks[m])] = b.recall[m];
      bj["ndcg@" + std::to_string(report.ks[m])] = b.ndcg[m];
    }
    buckets.push_back(bj);
  }
  j["buckets"] = buckets;
  return j;
}

std::string to_csv(const MetricsReport& report, bool header) {
  std::ostringstream out;
  out.precision(17);
  if (header) out << "phase,k,bucket,metric,value\n";
  const std::string phase(to_string(report.phase));
  for (std::size_t m = 0; m < report.ks.size(); ++m) {
    const std::size_t k = report.ks[m];
    out << phase << ',' << k << ",all,recall," << report.recall[m] << '\n';
    out << phase << ',' << k << ",all,ndcg," << report.ndcg[m] << '\n';
    for (const auto& b : report.buckets) {
      out << phase << ',' << k << ',' << b.label() << ",recall," << b.recall[m] << '\n';
      out << phase << ',' << k << ',' << b.label() << ",ndcg," << b.ndcg[m] << '\n';
      out << phase << ',' << k << ',' << b.label() << ",share," << b.share << '\n';
    }
  }
  return out.str();
}

}  // namespace selfcf
