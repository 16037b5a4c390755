#include "selfcf/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "selfcf/errors.hpp"

namespace selfcf {
namespace {

constexpr std::uint64_t kSamplerStream = 0x6e656773;  // "negs"

}  // namespace

NegativeSampler::NegativeSampler(const InteractionDataset& dataset, std::uint64_t seed)
    : NegativeSampler(dataset.train_positives(), dataset.num_items(), seed) {}

NegativeSampler::NegativeSampler(std::vector<std::vector<std::size_t>> positives,
                                 std::size_t num_items, std::uint64_t seed)
    : positives_(std::move(positives)), num_items_(num_items), rng_(seed, kSamplerStream) {
  for (auto& p : positives_) {
    if (!std::is_sorted(p.begin(), p.end())) std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    if (!p.empty() && p.back() >= num_items_) throw InvalidIndex("positive item out of range");
  }
}

void NegativeSampler::reseed(std::uint64_t seed) { rng_ = Rng(seed, kSamplerStream); }

bool NegativeSampler::is_positive(std::size_t user, std::size_t item) const {
  const auto& p = positives_.at(user);
  return std::binary_search(p.begin(), p.end(), item);
}

std::size_t NegativeSampler::sample(std::size_t user) {
  if (user >= positives_.size()) throw InvalidIndex("user " + std::to_string(user) + " out of range");
  if (positives_[user].size() >= num_items_) {
    throw ExhaustedSampler("user " + std::to_string(user) + " has interacted with every item");
  }
  for (;;) {
    const auto item = static_cast<std::size_t>(rng_.below(num_items_));
    if (!is_positive(user, item)) return item;
    ++rejections_;
  }
}

std::vector<std::size_t> NegativeSampler::sample(std::span<const std::size_t> users) {
  std::vector<std::size_t> out;
  out.reserve(users.size());
  for (std::size_t u : users) out.push_back(sample(u));
  return out;
}

double bpr_pair_loss(double margin) {
  // softplus(-m)
  return margin > 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

void BprConfig::validate() const {
  if (dim == 0) throw ConfigError("embedding dim must be positive");
  if (train.batch_size == 0) throw ConfigError("batch size must be positive");
  if (train.learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  if (train.l2 < 0.0) throw ConfigError("l2 must be non-negative");
  if (backbone == Backbone::lightgcn && layers == 0) {
    throw ConfigError("lightgcn needs at least one layer");
  }
}

BprTrainer::BprTrainer(const InteractionDataset& dataset, BprConfig config)
    : config_(std::move(config)),
      sampler_(dataset, derive_seed(config_.train.seed, {102})) {
  config_.validate();
  adjacency_ = build_normalized_adjacency(dataset);
  const std::size_t layers = config_.backbone == Backbone::mf ? 0 : config_.layers;
  encoder_ = EncoderParams::xavier(dataset.num_users(), dataset.num_items(), config_.dim, layers,
                                   derive_seed(config_.train.seed, {100}));
  adam_users_ = AdamState(dataset.num_users(), config_.dim, config_.train.learning_rate);
  adam_items_ = AdamState(dataset.num_items(), config_.dim, config_.train.learning_rate);
}

EncoderOutput BprTrainer::encode(const EncoderParams& params) const {
  ForwardContext ctx;
  return encoder_forward(config_.backbone, params, &adjacency_.matrix, Batch{}, ctx);
}

EncoderOutput BprTrainer::encode() const { return encode(encoder_); }

BprGradients BprTrainer::gradients(const EncoderParams& params, const Batch& batch,
                                   std::span<const std::size_t> negatives) const {
  if (batch.size() == 0) throw InvalidParameter("empty batch");
  if (negatives.size() != batch.size()) throw InvalidDimension("one negative per pair expected");
  ForwardContext ctx;
  const EncoderOutput out = encoder_forward(config_.backbone, params, &adjacency_.matrix, batch, ctx);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  BprGradients g;
  DenseMatrix gu(params.num_users(), params.dim());
  DenseMatrix gi(params.num_items(), params.dim());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t u = batch.users[b];
    const std::size_t p = batch.items[b];
    const std::size_t n = negatives[b];
    if (n >= params.num_items()) throw InvalidIndex("negative item out of range");
    const auto eu = out.users.row(u);
    const auto ep = out.items.row(p);
    const auto en = out.items.row(n);
    const double margin = dot(eu, ep) - dot(eu, en);
    g.loss += bpr_pair_loss(margin) * inv_b;
    // d softplus(-m)/dm = -sigmoid(-m)
    const double dm = -inv_b / (1.0 + std::exp(margin));
    auto ru = gu.row(u);
    auto rp = gi.row(p);
    auto rn = gi.row(n);
    for (std::size_t c = 0; c < eu.size(); ++c) {
      ru[c] += dm * (ep[c] - en[c]);
      rp[c] += dm * eu[c];
      rn[c] -= dm * eu[c];
    }
  }
  if (!std::isfinite(g.loss)) throw NumericError("non-finite BPR loss");
  g.encoder = encoder_backward_full(ctx, std::move(gu), std::move(gi));

  const double l2 = config_.train.l2;
  if (l2 > 0.0) {
    double reg = 0.0;
    const auto add = [&](DenseMatrix& grad, const DenseMatrix& table, std::size_t r) {
      auto w = table.row(r);
      auto gr = grad.row(r);
      reg += dot(w, w);
      for (std::size_t c = 0; c < w.size(); ++c) gr[c] += l2 * inv_b * w[c];
    };
    for (std::size_t b = 0; b < batch.size(); ++b) {
      add(g.encoder.users, params.users, batch.users[b]);
      add(g.encoder.items, params.items, batch.items[b]);
      add(g.encoder.items, params.items, negatives[b]);
    }
    g.loss += 0.5 * l2 * inv_b * reg;
  }
  return g;
}

double BprTrainer::loss(const EncoderParams& params, const Batch& batch,
                        std::span<const std::size_t> negatives) const {
  if (batch.size() == 0) throw InvalidParameter("empty batch");
  if (negatives.size() != batch.size()) throw InvalidDimension("one negative per pair expected");
  const EncoderOutput out = encode(params);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  double reg = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto eu = out.users.row(batch.users[b]);
    total += bpr_pair_loss(dot(eu, out.items.row(batch.items[b])) -
                           dot(eu, out.items.row(negatives[b])));
    const auto u0 = params.users.row(batch.users[b]);
    const auto p0 = params.items.row(batch.items[b]);
    const auto n0 = params.items.row(negatives[b]);
    reg += dot(u0, u0) + dot(p0, p0) + dot(n0, n0);
  }
  return total * inv_b + 0.5 * config_.train.l2 * inv_b * reg;
}

double BprTrainer::train_step(const Batch& batch, std::uint64_t draw_seed) {
  sampler_.reseed(draw_seed);
  const auto negatives = sampler_.sample(batch.users);
  const BprGradients g = gradients(encoder_, batch, negatives);
  adam_step(encoder_.users, g.encoder.users, adam_users_);
  adam_step(encoder_.items, g.encoder.items, adam_items_);
  return g.loss;
}

BprFit fit_bpr(const InteractionDataset& dataset, const BprConfig& config) {
  BprTrainer trainer(dataset, config);
  EncoderParams best = trainer.encoder();
  FitCallbacks cb;
  cb.step = [&](const Batch& batch, std::uint64_t seed) { return trainer.train_step(batch, seed); };
  cb.validate = [&] {
    const auto out = trainer.encode();
    return validation_recall(dataset, inner_product_scorer(out.users, out.items),
                             config.train.validation_k);
  };
  cb.embed_std = [&] { return embedding_std(trainer.encode().users); };
  cb.snapshot = [&] { best = trainer.encoder(); };
  cb.restore = [&] { trainer.encoder() = best; };
  BprFit out;
  out.result = fit_loop(dataset, config.train, cb);
  out.encoder = trainer.encoder();
  return out;
}

MetricsReport evaluate_supervised(const InteractionDataset& dataset, const EncoderOutput& output,
                                  const EvalOptions& options) {
  return evaluate(dataset, inner_product_scorer(output.users, output.items), options);
}

MetricsReport evaluate_most_popular(const InteractionDataset& dataset, const EvalOptions& options) {
  return evaluate(dataset, popularity_scorer(dataset), options);
}

}  // namespace selfcf
