#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selfcf/data.hpp"
#include "selfcf/encoders.hpp"
#include "selfcf/graph.hpp"
#include "selfcf/numerics.hpp"

namespace selfcf {

// ---------------------------------------------------------------------------
// Predictor head h
// ---------------------------------------------------------------------------

struct LinearLayer {
  DenseMatrix weight;  // in x out
  DenseMatrix bias;    // 1 x out

  friend bool operator==(const LinearLayer&, const LinearLayer&) = default;
};

// Stack of linear layers with ReLU between consecutive layers. The same head
// is applied to users and items. No layers means h is the identity.
struct Predictor {
  std::vector<LinearLayer> layers;

  static Predictor identity() { return {}; }
  // One d x d layer, Xavier weight, zero bias.
  static Predictor linear(std::size_t dim, std::uint64_t seed);
  // Linear -> ReLU -> Linear, both d x d.
  static Predictor two_layer(std::size_t dim, std::uint64_t seed);

  bool is_identity() const { return layers.empty(); }
  std::size_t parameter_count() const;

  friend bool operator==(const Predictor&, const Predictor&) = default;
};

struct PredictorCache {
  std::vector<DenseMatrix> inputs;  // input of each layer, post-ReLU
  std::vector<DenseMatrix> pre_activations;
};

// Parameter gradients, one entry per layer of the predictor.
struct PredictorGrad {
  std::vector<LinearLayer> layers;

  static PredictorGrad zeros_like(const Predictor& p);
};

DenseMatrix predictor_forward(const Predictor& p, const DenseMatrix& e);
DenseMatrix predictor_forward(const Predictor& p, const DenseMatrix& e, PredictorCache& cache);
// Accumulates parameter gradients into grad and returns d(loss)/d(input).
DenseMatrix predictor_backward(const Predictor& p, const PredictorCache& cache,
                               const DenseMatrix& grad_output, PredictorGrad& grad);

// ---------------------------------------------------------------------------
// Output perturbations (the target branch g)
// ---------------------------------------------------------------------------

enum class PerturbationKind { historical, dropout, edge_prune };
enum class DropoutGranularity { element, row };

struct PerturbationConfig {
  PerturbationKind kind = PerturbationKind::dropout;
  double tau = 0.5;       // historical momentum
  double dropout = 0.05;  // drop probability
  double prune = 0.05;    // edge drop probability
  DropoutGranularity granularity = DropoutGranularity::element;
  // Historical store keeps the mixed embedding (true) or the raw output.
  bool store_mixed = true;

  void validate() const;
};

struct HistoricalStore {
  DenseMatrix users;
  DenseMatrix items;
  std::vector<char> user_seen;
  std::vector<char> item_seen;
  double tau = 0.5;
  bool store_mixed = true;

  HistoricalStore() = default;
  HistoricalStore(std::size_t num_users, std::size_t num_items, std::size_t dim, double tau,
                  bool store_mixed = true);
};

// Perturbed batch embeddings (tilde E).
struct TargetEmbeddings {
  DenseMatrix users;
  DenseMatrix items;
};

struct HistoricalMix {
  TargetEmbeddings target;
  // d(tilde)/d(E) per batch row: 1 - tau for seen rows, 1 for first touch.
  std::vector<double> user_factor;
  std::vector<double> item_factor;
};

// tilde = tau * history + (1 - tau) * E without touching the store.
HistoricalMix historical_mix(const HistoricalStore& store, const DenseMatrix& batch_users,
                             const DenseMatrix& batch_items, const Batch& batch);
// Writes the batch rows back into the store (mixed or raw per store_mixed).
void historical_commit(HistoricalStore& store, const Batch& batch, const DenseMatrix& raw_users,
                       const DenseMatrix& raw_items, const TargetEmbeddings& mixed);
// Mix and commit in one call.
TargetEmbeddings perturb_historical(HistoricalStore& store, const DenseMatrix& batch_users,
                                    const DenseMatrix& batch_items, const Batch& batch);

struct DropoutDraw {
  DenseMatrix output;
  DenseMatrix mask;  // 0 or 1/(1-p) per element
};

// Inverted dropout with drop probability p.
DropoutDraw perturb_dropout(const DenseMatrix& e, double p, DropoutGranularity granularity,
                            std::uint64_t seed);

struct PruneDraw {
  TargetEmbeddings target;
  SparseMatrix pruned;
};

// One extra propagation of the full output tables through a freshly pruned
// adjacency; batch rows are then selected.
PruneDraw perturb_edge_prune(Backbone backbone, const EncoderOutput& output,
                             const NormalizedAdjacency& adjacency, double rho, std::uint64_t seed,
                             const Batch& batch);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

enum class Similarity { cosine, cross_entropy };

// Symmetrized loss over a batch:
//   mean_b 1/2 C(dot_u, tilde_i) + 1/2 C(tilde_u, dot_i).
// With stop_gradient the target gradients are left empty.
struct LossResult {
  double value = 0.0;
  DenseMatrix grad_dot_u;
  DenseMatrix grad_dot_i;
  DenseMatrix grad_tilde_u;
  DenseMatrix grad_tilde_i;
};

// Norms below this are clamped before dividing.
inline constexpr double kCosineNormFloor = 1e-12;

double negative_cosine(std::span<const double> a, std::span<const double> b);
// -softmax(b) . log softmax(a)
double softmax_cross_entropy(std::span<const double> a, std::span<const double> b);

LossResult cosine_loss(const DenseMatrix& dot_u, const DenseMatrix& dot_i,
                       const DenseMatrix& tilde_u, const DenseMatrix& tilde_i,
                       bool stop_gradient = true);
LossResult cross_entropy_loss(const DenseMatrix& dot_u, const DenseMatrix& dot_i,
                              const DenseMatrix& tilde_u, const DenseMatrix& tilde_i,
                              bool stop_gradient = true);
LossResult symmetric_loss(Similarity similarity, const DenseMatrix& dot_u,
                          const DenseMatrix& dot_i, const DenseMatrix& tilde_u,
                          const DenseMatrix& tilde_i, bool stop_gradient);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t batch_size = 2048;
  double learning_rate = 1e-3;
  double l2 = 0.0;
  std::size_t max_epochs = 1000;
  std::size_t patience = 50;
  std::size_t validation_k = 20;
  std::uint64_t seed = 2022;
  // Wall time in the epoch log breaks byte-identical reruns, so it is off
  // unless asked for.
  bool log_wall_time = false;
};

struct Ablation {
  bool no_predictor = false;
  bool no_stop_gradient = false;
  bool cross_entropy = false;
  bool two_layer_predictor = false;
  bool fixed_predictor = false;  // Xavier init, never updated
};

struct SelfCFConfig {
  Backbone backbone = Backbone::lightgcn;
  std::size_t dim = 64;
  std::size_t layers = 2;
  PerturbationConfig perturbation;
  TrainConfig train;
  Ablation ablation;

  void validate() const;
};

struct StepGradients {
  double loss = 0.0;
  EncoderGrad encoder;
  PredictorGrad predictor;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_recall = 0.0;
  double embed_std = 0.0;
  double seconds = 0.0;
};

// Mean over coordinates of the per-coordinate std of the L2-normalized rows.
// Collapsed embeddings give 0.
double embedding_std(const DenseMatrix& table);

// Holds the model, its optimizer state and the historical store for one run.
class SelfCFTrainer {
 public:
  SelfCFTrainer(const InteractionDataset& dataset, SelfCFConfig config);

  const SelfCFConfig& config() const { return config_; }
  const NormalizedAdjacency& adjacency() const { return adjacency_; }

  EncoderParams& encoder() { return encoder_; }
  const EncoderParams& encoder() const { return encoder_; }
  Predictor& predictor() { return predictor_; }
  const Predictor& predictor() const { return predictor_; }
  HistoricalStore& store() { return store_; }
  const HistoricalStore& store() const { return store_; }

  // Target branch output for params; the seed fixes the random draw.
  TargetEmbeddings target(const EncoderParams& params, const Batch& batch,
                          std::uint64_t draw_seed) const;

  // Full loss with the target recomputed from params.
  double loss(const EncoderParams& params, const Predictor& predictor, const Batch& batch,
              std::uint64_t draw_seed) const;
  // Loss against a fixed target (the stop-gradient surrogate).
  double loss_with_target(const EncoderParams& params, const Predictor& predictor,
                          const Batch& batch, const TargetEmbeddings& target) const;

  // Exact gradients; target terms are frozen unless no_stop_gradient is set.
  StepGradients gradients(const EncoderParams& params, const Predictor& predictor,
                          const Batch& batch, std::uint64_t draw_seed) const;

  // Forward, backward and one Adam step on the live parameters.
  double train_step(const Batch& batch, std::uint64_t draw_seed);

  // Full output tables of the current encoder (no perturbation).
  EncoderOutput encode() const;
  EncoderOutput encode(const EncoderParams& params) const;

  std::size_t parameter_count() const;

 private:
  struct Pass;
  Pass run_pass(const EncoderParams& params, const Predictor& predictor, const Batch& batch,
                std::uint64_t draw_seed, const TargetEmbeddings* fixed_target) const;
  StepGradients backward(const Pass& pass, const EncoderParams& params, const Predictor& predictor,
                         const Batch& batch) const;

  SelfCFConfig config_;
  NormalizedAdjacency adjacency_;
  EncoderParams encoder_;
  Predictor predictor_;
  HistoricalStore store_;
  AdamState adam_users_;
  AdamState adam_items_;
  std::vector<AdamState> adam_predictor_;  // weight, bias per layer
};

// Generic epoch loop with early stopping on validation Recall@K. `step` runs
// one batch and returns its loss; `snapshot`/`restore` save and reinstate
// the best parameters; `validate` returns the validation metric.
struct FitCallbacks {
  std::function<double(const Batch&, std::uint64_t draw_seed)> step;
  std::function<double()> validate;
  std::function<double()> embed_std;
  std::function<void()> snapshot;
  std::function<void()> restore;
};

struct FitResult {
  std::vector<EpochRecord> log;
  double initial_val_recall = 0.0;
  double best_val_recall = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

FitResult fit_loop(const InteractionDataset& dataset, const TrainConfig& train,
                   const FitCallbacks& callbacks);

struct SelfCFModel {
  EncoderParams encoder;
  Predictor predictor;
};

// Trains with early stopping and returns the best-validation parameters.
struct SelfCFFit {
  SelfCFModel model;
  FitResult result;
};

SelfCFFit fit(const InteractionDataset& dataset, const SelfCFConfig& config);

// One JSON object per line: {epoch, loss, val_recall@20, embed_std, seconds}.
std::string format_epoch_log(const std::vector<EpochRecord>& log, std::size_t validation_k = 20);

// Encoder block followed by the predictor block: u32 layer count, then per
// layer u64 in, u64 out, weight (in x out), bias (out), all little-endian.
void write_checkpoint(const std::filesystem::path& path, const EncoderParams& encoder,
                      const Predictor& predictor);
SelfCFModel read_checkpoint(const std::filesystem::path& path);

// (users + items) * dim + predictor parameters.
std::size_t count_parameters(std::size_t num_users, std::size_t num_items, std::size_t dim,
                             std::size_t predictor_layers);

}  // namespace selfcf
