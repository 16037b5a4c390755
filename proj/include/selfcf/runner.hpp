#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "selfcf/baselines.hpp"
#include "selfcf/data.hpp"
#include "selfcf/eval.hpp"
#include "selfcf/selfcf.hpp"

namespace selfcf {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Framework { selfcf_he, selfcf_ed, selfcf_ep, supervised_bpr };

Framework parse_framework(std::string_view name);
std::string_view to_string(Framework framework);

enum class DataSource { synthetic, raw, prepared };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  std::filesystem::path path;
  IngestOptions ingest;
  std::size_t kcore = 0;
  SplitRatios split;
  BlockDatasetSpec synthetic;
};

struct RunConfig {
  DataConfig data;
  Framework framework = Framework::selfcf_ed;
  SelfCFConfig model;  // backbone, dim, layers, perturbation, train, ablation
  EvalOptions eval;
  std::filesystem::path checkpoint;  // evaluate only; empty means <out>/checkpoint.bin
  std::filesystem::path out;
};

// Every recognised key with its default value. Config files and --set may
// only touch keys that appear here.
nlohmann::json default_config_tree();

// Applies "a.b.c=value". The value is read as JSON when it parses, otherwise
// as a string.
void apply_override(nlohmann::json& tree, std::string_view assignment);

// Defaults, then the file, then each override in order. The result is
// validated against the default tree.
nlohmann::json load_config_tree(const std::optional<std::filesystem::path>& file,
                                const std::vector<std::string>& overrides = {});

RunConfig parse_run_config(const nlohmann::json& tree);

// FNV-1a 64 over the canonical dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& tree);

InteractionDataset load_dataset(const DataConfig& data);
std::string format_stats(const InteractionDataset& dataset);

struct TrainedModel {
  SelfCFModel model;  // identity predictor for supervised_bpr
  FitResult result;
  EncoderOutput output;
};

TrainedModel train_model(const RunConfig& config, const InteractionDataset& dataset);
ScoreFn model_scorer(const RunConfig& config, const EncoderOutput& output,
                     const Predictor& predictor);

struct TrainOutcome {
  MetricsReport report;
  FitResult result;
  std::size_t parameter_count = 0;
};

// Each command writes its outputs and manifest.json under tree["out"].
InteractionDataset run_prepare(const nlohmann::json& tree, std::ostream& log);
TrainOutcome run_train(const nlohmann::json& tree, std::ostream& log);
MetricsReport run_evaluate(const nlohmann::json& tree, std::ostream& log);

// Short names tau, p, rho, layers, lambda, lr, dim map to their config paths;
// any other dotted key of the default tree is accepted as is.
std::string resolve_axis(std::string_view axis);
// "0.1,0.2,0.5" or "start:stop:step" with stop inclusive.
std::vector<double> parse_sweep_values(std::string_view spec);

struct SweepRow {
  std::string axis;
  double value = 0.0;
  MetricsReport report;
  std::size_t best_epoch = 0;
};

std::vector<SweepRow> run_sweep(const nlohmann::json& tree, std::string_view axis,
                                const std::vector<double>& values, std::ostream& log);
std::string format_sweep_csv(const std::vector<SweepRow>& rows);

struct AblationRow {
  std::string variant;
  MetricsReport report;
  std::size_t best_epoch = 0;
};

// baseline, no_predictor, fixed_random_predictor, 2layer_predictor,
// cross_entropy, no_sg_with_pred, no_sg_no_pred.
const std::vector<std::string>& ablation_variants();
void apply_ablation_variant(nlohmann::json& tree, std::string_view variant);

std::vector<AblationRow> run_ablate(const nlohmann::json& tree, std::ostream& log);
std::string format_ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace selfcf
