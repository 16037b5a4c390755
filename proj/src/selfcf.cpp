#include "selfcf/selfcf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "selfcf/errors.hpp"
#include "selfcf/eval.hpp"
#include "selfcf/rng.hpp"

namespace selfcf {
namespace {

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidDimension(std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                           std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                           std::to_string(b.cols()));
  }
}

void require_finite(const DenseMatrix& m, const char* what) {
  if (!m.all_finite()) throw NumericError(std::string(what) + " contains non-finite values");
}

// C(a, b) = -a.b / (|a||b|) with gradients for both arguments.
double cosine_term(std::span<const double> a, std::span<const double> b, std::span<double> ga,
                   std::span<double> gb, double scale) {
  const double raw_na = std::sqrt(dot(a, a));
  const double raw_nb = std::sqrt(dot(b, b));
  const double na = std::max(raw_na, kCosineNormFloor);
  const double nb = std::max(raw_nb, kCosineNormFloor);
  const double ab = dot(a, b);
  const double value = -ab / (na * nb);
  if (!ga.empty()) {
    // Below the floor the norm is a constant and drops out of the derivative.
    const double self = raw_na >= kCosineNormFloor ? ab / (na * na * na * nb) : 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) ga[k] += scale * (-b[k] / (na * nb) + self * a[k]);
  }
  if (!gb.empty()) {
    const double self = raw_nb >= kCosineNormFloor ? ab / (na * nb * nb * nb) : 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) gb[k] += scale * (-a[k] / (na * nb) + self * b[k]);
  }
  return value;
}

void log_softmax(std::span<const double> x, std::vector<double>& out) {
  out.resize(x.size());
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  const double lse = m + std::log(s);
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - lse;
}

// C(a, b) = -softmax(b) . log softmax(a) with gradients for both arguments.
double cross_entropy_term(std::span<const double> a, std::span<const double> b,
                          std::span<double> ga, std::span<double> gb, double scale) {
  std::vector<double> la;
  std::vector<double> lb;
  log_softmax(a, la);
  log_softmax(b, lb);
  double value = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) value -= std::exp(lb[k]) * la[k];
  if (!ga.empty()) {
    for (std::size_t k = 0; k < a.size(); ++k) ga[k] += scale * (std::exp(la[k]) - std::exp(lb[k]));
  }
  if (!gb.empty()) {
    // value = -(q . la), so q . la = -value.
    for (std::size_t k = 0; k < b.size(); ++k) gb[k] += scale * (-std::exp(lb[k]) * (la[k] + value));
  }
  return value;
}

using TermFn = double (*)(std::span<const double>, std::span<const double>, std::span<double>,
                          std::span<double>, double);

LossResult symmetric_loss_impl(TermFn term, const DenseMatrix& dot_u, const DenseMatrix& dot_i,
                               const DenseMatrix& tilde_u, const DenseMatrix& tilde_i,
                               bool stop_gradient) {
  require_same_shape(dot_u, dot_i, "loss dot_u/dot_i");
  require_same_shape(dot_u, tilde_u, "loss dot_u/tilde_u");
  require_same_shape(dot_u, tilde_i, "loss dot_u/tilde_i");
  require_finite(dot_u, "dot_u");
  require_finite(dot_i, "dot_i");
  require_finite(tilde_u, "tilde_u");
  require_finite(tilde_i, "tilde_i");
  const std::size_t batch = dot_u.rows();
  if (batch == 0) throw InvalidDimension("loss over an empty batch");

  LossResult r;
  r.grad_dot_u = DenseMatrix(dot_u.rows(), dot_u.cols());
  r.grad_dot_i = DenseMatrix(dot_u.rows(), dot_u.cols());
  if (!stop_gradient) {
    r.grad_tilde_u = DenseMatrix(dot_u.rows(), dot_u.cols());
    r.grad_tilde_i = DenseMatrix(dot_u.rows(), dot_u.cols());
  }
  const double scale = 0.5 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    std::span<double> none;
    const double first = term(dot_u.row(b), tilde_i.row(b), r.grad_dot_u.row(b),
                              stop_gradient ? none : r.grad_tilde_i.row(b), scale);
    const double second = term(tilde_u.row(b), dot_i.row(b),
                               stop_gradient ? none : r.grad_tilde_u.row(b), r.grad_dot_i.row(b),
                               scale);
    total += 0.5 * first + 0.5 * second;
  }
  r.value = total / static_cast<double>(batch);
  return r;
}

std::uint64_t draw_seed_for(std::uint64_t seed, std::uint64_t purpose) {
  return derive_seed(seed, {purpose});
}

}  // namespace

// --- predictor --------------------------------------------------------------

Predictor Predictor::linear(std::size_t dim, std::uint64_t seed) {
  Predictor p;
  p.layers.push_back({xavier_init(dim, dim, seed), DenseMatrix(1, dim)});
  return p;
}

Predictor Predictor::two_layer(std::size_t dim, std::uint64_t seed) {
  Predictor p;
  p.layers.push_back({xavier_init(dim, dim, derive_seed(seed, {1})), DenseMatrix(1, dim)});
  p.layers.push_back({xavier_init(dim, dim, derive_seed(seed, {2})), DenseMatrix(1, dim)});
  return p;
}

std::size_t Predictor::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

PredictorGrad PredictorGrad::zeros_like(const Predictor& p) {
  PredictorGrad g;
  for (const auto& l : p.layers) {
    g.layers.push_back({DenseMatrix(l.weight.rows(), l.weight.cols()),
                        DenseMatrix(l.bias.rows(), l.bias.cols())});
  }
  return g;
}

DenseMatrix predictor_forward(const Predictor& p, const DenseMatrix& e) {
  PredictorCache unused;
  return predictor_forward(p, e, unused);
}

DenseMatrix predictor_forward(const Predictor& p, const DenseMatrix& e, PredictorCache& cache) {
  cache.inputs.clear();
  cache.pre_activations.clear();
  DenseMatrix x = e;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& layer = p.layers[k];
    if (x.cols() != layer.weight.rows()) {
      throw InvalidDimension("predictor layer " + std::to_string(k) + " expects " +
                             std::to_string(layer.weight.rows()) + " columns, got " +
                             std::to_string(x.cols()));
    }
    DenseMatrix z = matmul(x, layer.weight);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias(0, c);
    }
    cache.inputs.push_back(std::move(x));
    const bool last = k + 1 == p.layers.size();
    if (last) {
      cache.pre_activations.push_back(z);
      x = std::move(z);
    } else {
      DenseMatrix a = z;
      for (double& v : a.values()) v = std::max(v, 0.0);
      cache.pre_activations.push_back(std::move(z));
      x = std::move(a);
    }
  }
  return x;
}

DenseMatrix predictor_backward(const Predictor& p, const PredictorCache& cache,
                               const DenseMatrix& grad_output, PredictorGrad& grad) {
  if (cache.inputs.size() != p.layers.size() || grad.layers.size() != p.layers.size()) {
    throw StateError("predictor_backward without a matching forward");
  }
  DenseMatrix g = grad_output;
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    if (k + 1 != p.layers.size()) {
      const auto z = cache.pre_activations[k].values();
      auto gv = g.values();
      for (std::size_t j = 0; j < gv.size(); ++j) {
        if (z[j] <= 0.0) gv[j] = 0.0;
      }
    }
    axpy(grad.layers[k].weight, matmul_at_b(cache.inputs[k], g));
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto row = g.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) grad.layers[k].bias(0, c) += row[c];
    }
    g = matmul_a_bt(g, p.layers[k].weight);
  }
  return g;
}

// --- perturbations ----------------------------------------------------------

void PerturbationConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidParameter("tau must lie in [0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidParameter("dropout must lie in [0, 1)");
  if (!(prune >= 0.0 && prune < 1.0)) throw InvalidParameter("prune ratio must lie in [0, 1)");
}

HistoricalStore::HistoricalStore(std::size_t num_users, std::size_t num_items, std::size_t dim,
                                 double tau_, bool store_mixed_)
    : users(num_users, dim),
      items(num_items, dim),
      user_seen(num_users, 0),
      item_seen(num_items, 0),
      tau(tau_),
      store_mixed(store_mixed_) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidParameter("tau must lie in [0, 1]");
}

HistoricalMix historical_mix(const HistoricalStore& store, const DenseMatrix& batch_users,
                             const DenseMatrix& batch_items, const Batch& batch) {
  HistoricalMix mix;
  const auto blend = [&](const DenseMatrix& current, const std::vector<std::size_t>& ids,
                         const DenseMatrix& history, const std::vector<char>& seen,
                         DenseMatrix& out, std::vector<double>& factor) {
    if (current.rows() != ids.size()) throw InvalidDimension("batch rows and ids differ");
    out = DenseMatrix(current.rows(), current.cols());
    factor.assign(ids.size(), 1.0);
    for (std::size_t b = 0; b < ids.size(); ++b) {
      if (ids[b] >= seen.size()) throw InvalidIndex("historical store index out of range");
      auto dst = out.row(b);
      auto cur = current.row(b);
      if (!seen[ids[b]]) {
        std::copy(cur.begin(), cur.end(), dst.begin());
        continue;
      }
      auto hist = history.row(ids[b]);
      for (std::size_t c = 0; c < dst.size(); ++c) {
        dst[c] = store.tau * hist[c] + (1.0 - store.tau) * cur[c];
      }
      factor[b] = 1.0 - store.tau;
    }
  };
  blend(batch_users, batch.users, store.users, store.user_seen, mix.target.users, mix.user_factor);
  blend(batch_items, batch.items, store.items, store.item_seen, mix.target.items, mix.item_factor);
  return mix;
}

void historical_commit(HistoricalStore& store, const Batch& batch, const DenseMatrix& raw_users,
                       const DenseMatrix& raw_items, const TargetEmbeddings& mixed) {
  const auto write = [&](const std::vector<std::size_t>& ids, const DenseMatrix& source,
                         DenseMatrix& table, std::vector<char>& seen) {
    for (std::size_t b = 0; b < ids.size(); ++b) {
      std::copy_n(source.row(b).begin(), source.cols(), table.row(ids[b]).begin());
      seen[ids[b]] = 1;
    }
  };
  write(batch.users, store.store_mixed ? mixed.users : raw_users, store.users, store.user_seen);
  write(batch.items, store.store_mixed ? mixed.items : raw_items, store.items, store.item_seen);
}

TargetEmbeddings perturb_historical(HistoricalStore& store, const DenseMatrix& batch_users,
                                    const DenseMatrix& batch_items, const Batch& batch) {
  HistoricalMix mix = historical_mix(store, batch_users, batch_items, batch);
  historical_commit(store, batch, batch_users, batch_items, mix.target);
  return std::move(mix.target);
}

DropoutDraw perturb_dropout(const DenseMatrix& e, double p, DropoutGranularity granularity,
                            std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw InvalidParameter("dropout ratio must lie in [0, 1), got " + std::to_string(p));
  }
  DropoutDraw draw{e, DenseMatrix(e.rows(), e.cols(), 1.0)};
  if (p == 0.0) return draw;
  const double keep_scale = 1.0 / (1.0 - p);
  Rng rng(seed, /*stream=*/0x64726f70ULL);
  for (std::size_t r = 0; r < e.rows(); ++r) {
    auto mask = draw.mask.row(r);
    if (granularity == DropoutGranularity::row) {
      const double m = rng.bernoulli(p) ? 0.0 : keep_scale;
      std::fill(mask.begin(), mask.end(), m);
    } else {
      for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
    }
    auto out = draw.output.row(r);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] *= mask[c];
  }
  return draw;
}

PruneDraw perturb_edge_prune(Backbone backbone, const EncoderOutput& output,
                             const NormalizedAdjacency& adjacency, double rho, std::uint64_t seed,
                             const Batch& batch) {
  if (backbone != Backbone::lightgcn) {
    throw UnsupportedConfiguration("edge pruning needs a graph encoder (lightgcn)");
  }
  PruneDraw draw;
  draw.pruned = prune_edges(adjacency, rho, seed);
  const DenseMatrix propagated = spmm(draw.pruned, vstack(output.users, output.items));
  const DenseMatrix users = slice_rows(propagated, 0, adjacency.num_users);
  const DenseMatrix items = slice_rows(propagated, adjacency.num_users, propagated.rows());
  draw.target.users = gather_rows(users, batch.users);
  draw.target.items = gather_rows(items, batch.items);
  return draw;
}

// --- losses -------------------------------------------------------------------

double negative_cosine(std::span<const double> a, std::span<const double> b) {
  return cosine_term(a, b, {}, {}, 0.0);
}

double softmax_cross_entropy(std::span<const double> a, std::span<const double> b) {
  return cross_entropy_term(a, b, {}, {}, 0.0);
}

LossResult cosine_loss(const DenseMatrix& dot_u, const DenseMatrix& dot_i,
                       const DenseMatrix& tilde_u, const DenseMatrix& tilde_i,
                       bool stop_gradient) {
  return symmetric_loss_impl(cosine_term, dot_u, dot_i, tilde_u, tilde_i, stop_gradient);
}

LossResult cross_entropy_loss(const DenseMatrix& dot_u, const DenseMatrix& dot_i,
                              const DenseMatrix& tilde_u, const DenseMatrix& tilde_i,
                              bool stop_gradient) {
  return symmetric_loss_impl(cross_entropy_term, dot_u, dot_i, tilde_u, tilde_i, stop_gradient);
}

LossResult symmetric_loss(Similarity similarity, const DenseMatrix& dot_u,
                          const DenseMatrix& dot_i, const DenseMatrix& tilde_u,
                          const DenseMatrix& tilde_i, bool stop_gradient) {
  return similarity == Similarity::cosine
             ? cosine_loss(dot_u, dot_i, tilde_u, tilde_i, stop_gradient)
             : cross_entropy_loss(dot_u, dot_i, tilde_u, tilde_i, stop_gradient);
}

// --- trainer ------------------------------------------------------------------

void SelfCFConfig::validate() const {
  perturbation.validate();
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  if (train.batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(train.l2 >= 0.0)) throw ConfigError("l2 coefficient must be non-negative");
  if (!(train.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (train.validation_k == 0) throw ConfigError("validation K must be positive");
  if (backbone == Backbone::lightgcn && layers == 0) {
    throw ConfigError("lightgcn needs at least one layer");
  }
  if (perturbation.kind == PerturbationKind::edge_prune && backbone != Backbone::lightgcn) {
    throw UnsupportedConfiguration("edge pruning (selfcf_ep) requires the lightgcn backbone");
  }
}

double embedding_std(const DenseMatrix& table) {
  if (table.rows() == 0 || table.cols() == 0) return 0.0;
  std::vector<double> mean(table.cols(), 0.0);
  std::vector<double> sq(table.cols(), 0.0);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto row = table.row(r);
    const double norm = std::max(std::sqrt(dot(row, row)), kCosineNormFloor);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double v = row[c] / norm;
      mean[c] += v;
      sq[c] += v * v;
    }
  }
  const double n = static_cast<double>(table.rows());
  double total = 0.0;
  for (std::size_t c = 0; c < table.cols(); ++c) {
    const double m = mean[c] / n;
    total += std::sqrt(std::max(sq[c] / n - m * m, 0.0));
  }
  return total / static_cast<double>(table.cols());
}

struct SelfCFTrainer::Pass {
  EncoderOutput output;
  ForwardContext ctx;
  PredictorCache cache_u;
  PredictorCache cache_i;
  TargetEmbeddings target;
  bool frozen_target = false;
  std::vector<double> hist_user_factor;
  std::vector<double> hist_item_factor;
  DenseMatrix mask_u;
  DenseMatrix mask_i;
  SparseMatrix pruned;
  LossResult loss;
  double total = 0.0;
};

SelfCFTrainer::SelfCFTrainer(const InteractionDataset& dataset, SelfCFConfig config)
    : config_(std::move(config)) {
  config_.validate();
  adjacency_ = build_normalized_adjacency(dataset);
  const std::size_t layers = config_.backbone == Backbone::mf ? 0 : config_.layers;
  encoder_ = EncoderParams::xavier(dataset.num_users(), dataset.num_items(), config_.dim, layers,
                                   derive_seed(config_.train.seed, {100}));
  const std::uint64_t pred_seed = derive_seed(config_.train.seed, {101});
  if (config_.ablation.no_predictor) {
    predictor_ = Predictor::identity();
  } else if (config_.ablation.two_layer_predictor) {
    predictor_ = Predictor::two_layer(config_.dim, pred_seed);
  } else {
    predictor_ = Predictor::linear(config_.dim, pred_seed);
  }
  store_ = HistoricalStore(dataset.num_users(), dataset.num_items(), config_.dim,
                           config_.perturbation.tau, config_.perturbation.store_mixed);
  const double lr = config_.train.learning_rate;
  adam_users_ = AdamState(encoder_.users.rows(), encoder_.users.cols(), lr);
  adam_items_ = AdamState(encoder_.items.rows(), encoder_.items.cols(), lr);
  for (const auto& l : predictor_.layers) {
    adam_predictor_.emplace_back(l.weight.rows(), l.weight.cols(), lr);
    adam_predictor_.emplace_back(l.bias.rows(), l.bias.cols(), lr);
  }
}

EncoderOutput SelfCFTrainer::encode() const { return encode(encoder_); }

EncoderOutput SelfCFTrainer::encode(const EncoderParams& params) const {
  ForwardContext ctx;
  return encoder_forward(config_.backbone, params, &adjacency_.matrix, Batch{}, ctx);
}

SelfCFTrainer::Pass SelfCFTrainer::run_pass(const EncoderParams& params,
                                            const Predictor& predictor, const Batch& batch,
                                            std::uint64_t draw_seed,
                                            const TargetEmbeddings* fixed_target) const {
  if (batch.size() == 0) throw InvalidParameter("empty batch");
  Pass pass;
  pass.output = encoder_forward(config_.backbone, params, &adjacency_.matrix, batch, pass.ctx);
  const DenseMatrix dot_u = predictor_forward(predictor, pass.output.batch_users, pass.cache_u);
  const DenseMatrix dot_i = predictor_forward(predictor, pass.output.batch_items, pass.cache_i);

  if (fixed_target != nullptr) {
    pass.target = *fixed_target;
    pass.frozen_target = true;
  } else {
    const auto& pc = config_.perturbation;
    switch (pc.kind) {
      case PerturbationKind::historical: {
        auto mix = historical_mix(store_, pass.output.batch_users, pass.output.batch_items, batch);
        pass.target = std::move(mix.target);
        pass.hist_user_factor = std::move(mix.user_factor);
        pass.hist_item_factor = std::move(mix.item_factor);
        break;
      }
      case PerturbationKind::dropout: {
        auto du = perturb_dropout(pass.output.batch_users, pc.dropout, pc.granularity,
                                  draw_seed_for(draw_seed, 1));
        auto di = perturb_dropout(pass.output.batch_items, pc.dropout, pc.granularity,
                                  draw_seed_for(draw_seed, 2));
        pass.target = {std::move(du.output), std::move(di.output)};
        pass.mask_u = std::move(du.mask);
        pass.mask_i = std::move(di.mask);
        break;
      }
      case PerturbationKind::edge_prune: {
        auto draw = perturb_edge_prune(config_.backbone, pass.output, adjacency_, pc.prune,
                                       draw_seed_for(draw_seed, 3), batch);
        pass.target = std::move(draw.target);
        pass.pruned = std::move(draw.pruned);
        break;
      }
    }
  }

  const bool stop_gradient = pass.frozen_target || !config_.ablation.no_stop_gradient;
  const Similarity sim = config_.ablation.cross_entropy ? Similarity::cross_entropy : Similarity::cosine;
  pass.loss = symmetric_loss(sim, dot_u, dot_i, pass.target.users, pass.target.items, stop_gradient);

  double reg = 0.0;
  if (config_.train.l2 > 0.0) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto u = params.users.row(batch.users[b]);
      auto i = params.items.row(batch.items[b]);
      reg += dot(u, u) + dot(i, i);
    }
    reg *= 0.5 * config_.train.l2 / static_cast<double>(batch.size());
  }
  pass.total = pass.loss.value + reg;
  return pass;
}

TargetEmbeddings SelfCFTrainer::target(const EncoderParams& params, const Batch& batch,
                                       std::uint64_t draw_seed) const {
  return run_pass(params, predictor_, batch, draw_seed, nullptr).target;
}

double SelfCFTrainer::loss(const EncoderParams& params, const Predictor& predictor,
                           const Batch& batch, std::uint64_t draw_seed) const {
  return run_pass(params, predictor, batch, draw_seed, nullptr).total;
}

double SelfCFTrainer::loss_with_target(const EncoderParams& params, const Predictor& predictor,
                                       const Batch& batch, const TargetEmbeddings& target) const {
  return run_pass(params, predictor, batch, 0, &target).total;
}

namespace {

void scale_rows(DenseMatrix& m, const std::vector<double>& factor) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (double& v : m.row(r)) v *= factor[r];
  }
}

void hadamard_inplace(DenseMatrix& a, const DenseMatrix& b) {
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t k = 0; k < av.size(); ++k) av[k] *= bv[k];
}

}  // namespace

StepGradients SelfCFTrainer::gradients(const EncoderParams& params, const Predictor& predictor,
                                       const Batch& batch, std::uint64_t draw_seed) const {
  return backward(run_pass(params, predictor, batch, draw_seed, nullptr), params, predictor, batch);
}

StepGradients SelfCFTrainer::backward(const Pass& pass, const EncoderParams& params,
                                      const Predictor& predictor, const Batch& batch) const {
  StepGradients out;
  out.loss = pass.total;
  out.predictor = PredictorGrad::zeros_like(predictor);

  // Online path: loss -> h -> batch rows.
  DenseMatrix g_users = predictor_backward(predictor, pass.cache_u, pass.loss.grad_dot_u, out.predictor);
  DenseMatrix g_items = predictor_backward(predictor, pass.cache_i, pass.loss.grad_dot_i, out.predictor);

  DenseMatrix full_users(params.num_users(), params.dim());
  DenseMatrix full_items(params.num_items(), params.dim());

  const bool through_target = !pass.frozen_target && config_.ablation.no_stop_gradient;
  if (through_target) {
    DenseMatrix t_users = pass.loss.grad_tilde_u;
    DenseMatrix t_items = pass.loss.grad_tilde_i;
    switch (config_.perturbation.kind) {
      case PerturbationKind::historical:
        scale_rows(t_users, pass.hist_user_factor);
        scale_rows(t_items, pass.hist_item_factor);
        axpy(g_users, t_users);
        axpy(g_items, t_items);
        break;
      case PerturbationKind::dropout:
        hadamard_inplace(t_users, pass.mask_u);
        hadamard_inplace(t_items, pass.mask_i);
        axpy(g_users, t_users);
        axpy(g_items, t_items);
        break;
      case PerturbationKind::edge_prune: {
        // tilde_full = P * out_full with P symmetric, so the adjoint is P again.
        DenseMatrix scattered(params.num_users() + params.num_items(), params.dim());
        DenseMatrix su(params.num_users(), params.dim());
        DenseMatrix si(params.num_items(), params.dim());
        scatter_add_rows(su, batch.users, t_users);
        scatter_add_rows(si, batch.items, t_items);
        const DenseMatrix back = spmm(pass.pruned, vstack(su, si));
        axpy(full_users, slice_rows(back, 0, params.num_users()));
        axpy(full_items, slice_rows(back, params.num_users(), back.rows()));
        break;
      }
    }
  }
  scatter_add_rows(full_users, batch.users, g_users);
  scatter_add_rows(full_items, batch.items, g_items);
  out.encoder = encoder_backward_full(pass.ctx, std::move(full_users), std::move(full_items));

  if (config_.train.l2 > 0.0) {
    const double coef = config_.train.l2 / static_cast<double>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto gu = out.encoder.users.row(batch.users[b]);
      auto pu = params.users.row(batch.users[b]);
      for (std::size_t c = 0; c < gu.size(); ++c) gu[c] += coef * pu[c];
      auto gi = out.encoder.items.row(batch.items[b]);
      auto pi = params.items.row(batch.items[b]);
      for (std::size_t c = 0; c < gi.size(); ++c) gi[c] += coef * pi[c];
    }
  }
  return out;
}

double SelfCFTrainer::train_step(const Batch& batch, std::uint64_t draw_seed) {
  const Pass pass = run_pass(encoder_, predictor_, batch, draw_seed, nullptr);
  const StepGradients grads = backward(pass, encoder_, predictor_, batch);
  if (config_.perturbation.kind == PerturbationKind::historical) {
    // The store sees the pre-update outputs, the same ones the loss saw.
    historical_commit(store_, batch, pass.output.batch_users, pass.output.batch_items, pass.target);
  }
  adam_step(encoder_.users, grads.encoder.users, adam_users_);
  adam_step(encoder_.items, grads.encoder.items, adam_items_);
  if (!config_.ablation.fixed_predictor) {
    for (std::size_t k = 0; k < predictor_.layers.size(); ++k) {
      adam_step(predictor_.layers[k].weight, grads.predictor.layers[k].weight, adam_predictor_[2 * k]);
      adam_step(predictor_.layers[k].bias, grads.predictor.layers[k].bias, adam_predictor_[2 * k + 1]);
    }
  }
  return grads.loss;
}

std::size_t SelfCFTrainer::parameter_count() const {
  return encoder_.users.size() + encoder_.items.size() + predictor_.parameter_count();
}

// --- fit ------------------------------------------------------------------------

FitResult fit_loop(const InteractionDataset& dataset, const TrainConfig& train,
                   const FitCallbacks& callbacks) {
  FitResult result;
  result.initial_val_recall = callbacks.validate();
  result.best_val_recall = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= train.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto batches = batch_iterator(dataset, train.batch_size, derive_seed(train.seed, {epoch}));
    double weighted = 0.0;
    std::size_t pairs = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const double loss = callbacks.step(batches[b], derive_seed(train.seed, {epoch, b + 1}));
      weighted += loss * static_cast<double>(batches[b].size());
      pairs += batches[b].size();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = weighted / static_cast<double>(pairs);
    rec.val_recall = callbacks.validate();
    rec.embed_std = callbacks.embed_std ? callbacks.embed_std() : 0.0;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.seconds = train.log_wall_time ? secs : 0.0;
    result.log.push_back(rec);
    result.epochs_run = epoch;
    if (!std::isfinite(rec.loss)) throw NumericError("training loss diverged");

    if (rec.val_recall > result.best_val_recall) {
      result.best_val_recall = rec.val_recall;
      result.best_epoch = epoch;
      stale = 0;
      callbacks.snapshot();
    } else if (++stale > train.patience) {
      break;
    }
  }
  if (result.best_epoch > 0) {
    callbacks.restore();
  } else {
    result.best_val_recall = result.initial_val_recall;
  }
  return result;
}

SelfCFFit fit(const InteractionDataset& dataset, const SelfCFConfig& config) {
  SelfCFTrainer trainer(dataset, config);
  SelfCFModel best{trainer.encoder(), trainer.predictor()};
  FitCallbacks cb;
  cb.step = [&](const Batch& batch, std::uint64_t seed) { return trainer.train_step(batch, seed); };
  cb.validate = [&] {
    const auto out = trainer.encode();
    return validation_recall(dataset, cross_prediction_scorer(out.users, out.items, trainer.predictor()),
                             config.train.validation_k);
  };
  cb.embed_std = [&] { return embedding_std(trainer.encode().users); };
  cb.snapshot = [&] { best = {trainer.encoder(), trainer.predictor()}; };
  cb.restore = [&] {
    trainer.encoder() = best.encoder;
    trainer.predictor() = best.predictor;
  };
  SelfCFFit out;
  out.result = fit_loop(dataset, config.train, cb);
  out.model = {trainer.encoder(), trainer.predictor()};
  return out;
}

std::string format_epoch_log(const std::vector<EpochRecord>& log, std::size_t validation_k) {
  std::string out;
  const std::string recall_key = "val_recall@" + std::to_string(validation_k);
  for (const auto& rec : log) {
    nlohmann::ordered_json j;
    j["epoch"] = rec.epoch;
    j["loss"] = rec.loss;
    j[recall_key] = rec.val_recall;
    j["embed_std"] = rec.embed_std;
    j["seconds"] = rec.seconds;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const EncoderParams& encoder,
                      const Predictor& predictor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  write_encoder_block(out, encoder);
  binary::write_u32(out, static_cast<std::uint32_t>(predictor.layers.size()));
  for (const auto& l : predictor.layers) {
    binary::write_u64(out, l.weight.rows());
    binary::write_u64(out, l.weight.cols());
    binary::write_f64s(out, l.weight.values());
    binary::write_f64s(out, l.bias.values());
  }
  if (!out) throw IoError("checkpoint write failed for " + path.string());
}

SelfCFModel read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  SelfCFModel model;
  model.encoder = read_encoder_block(in);
  const std::uint32_t layers = binary::read_u32(in);
  for (std::uint32_t k = 0; k < layers; ++k) {
    const std::uint64_t rows = binary::read_u64(in);
    const std::uint64_t cols = binary::read_u64(in);
    LinearLayer l{DenseMatrix(rows, cols), DenseMatrix(1, cols)};
    binary::read_f64s(in, l.weight.values());
    binary::read_f64s(in, l.bias.values());
    model.predictor.layers.push_back(std::move(l));
  }
  return model;
}

std::size_t count_parameters(std::size_t num_users, std::size_t num_items, std::size_t dim,
                             std::size_t predictor_layers) {
  return (num_users + num_items) * dim + predictor_layers * (dim * dim + dim);
}

}  // namespace selfcf
