#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "selfcf/data.hpp"
#include "selfcf/encoders.hpp"
#include "selfcf/eval.hpp"
#include "selfcf/graph.hpp"
#include "selfcf/numerics.hpp"
#include "selfcf/rng.hpp"
#include "selfcf/selfcf.hpp"

namespace selfcf {

// Uniform negatives by rejection against the user's sorted training items.
class NegativeSampler {
 public:
  NegativeSampler(const InteractionDataset& dataset, std::uint64_t seed);
  NegativeSampler(std::vector<std::vector<std::size_t>> positives, std::size_t num_items,
                  std::uint64_t seed);

  std::size_t sample(std::size_t user);
  std::vector<std::size_t> sample(std::span<const std::size_t> users);
  bool is_positive(std::size_t user, std::size_t item) const;
  void reseed(std::uint64_t seed);

  std::size_t num_items() const { return num_items_; }
  // Draws rejected so far, the cost of checking against observed items.
  std::uint64_t rejections() const { return rejections_; }

 private:
  std::vector<std::vector<std::size_t>> positives_;
  std::size_t num_items_ = 0;
  Rng rng_;
  std::uint64_t rejections_ = 0;
};

// -ln sigmoid(margin), computed without overflow.
double bpr_pair_loss(double margin);

struct BprConfig {
  Backbone backbone = Backbone::mf;
  std::size_t dim = 64;
  std::size_t layers = 2;
  TrainConfig train;

  void validate() const;
};

struct BprGradients {
  double loss = 0.0;
  EncoderGrad encoder;
};

class BprTrainer {
 public:
  BprTrainer(const InteractionDataset& dataset, BprConfig config);

  const BprConfig& config() const { return config_; }
  EncoderParams& encoder() { return encoder_; }
  const EncoderParams& encoder() const { return encoder_; }
  NegativeSampler& sampler() { return sampler_; }

  // mean -ln sigmoid(x_ui+ - x_ui-) + 1/2 lambda/B sum of squared layer-0 rows.
  double loss(const EncoderParams& params, const Batch& batch,
              std::span<const std::size_t> negatives) const;
  BprGradients gradients(const EncoderParams& params, const Batch& batch,
                         std::span<const std::size_t> negatives) const;

  // Draws one negative per pair with the sampler seeded by draw_seed, then
  // takes one Adam step.
  double train_step(const Batch& batch, std::uint64_t draw_seed);

  EncoderOutput encode() const;
  EncoderOutput encode(const EncoderParams& params) const;

 private:
  BprConfig config_;
  NormalizedAdjacency adjacency_;
  EncoderParams encoder_;
  NegativeSampler sampler_;
  AdamState adam_users_;
  AdamState adam_items_;
};

struct BprFit {
  EncoderParams encoder;
  FitResult result;
};

BprFit fit_bpr(const InteractionDataset& dataset, const BprConfig& config);

// Evaluation with the plain inner product e_u.e_i, no predictor.
MetricsReport evaluate_supervised(const InteractionDataset& dataset, const EncoderOutput& output,
                                  const EvalOptions& options = {});

// Ranks unseen items by training popularity.
MetricsReport evaluate_most_popular(const InteractionDataset& dataset,
                                    const EvalOptions& options = {});

}  // namespace selfcf
