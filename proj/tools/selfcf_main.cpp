#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "selfcf/errors.hpp"
#include "selfcf/runner.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "Run seed");
  cmd->add_option("--set", flags.sets, "Override a config key, key.path=value (repeatable)")
      ->take_all()
      ->allow_extra_args(false);
  cmd->add_option("--out", flags.out, "Output directory");
}

nlohmann::json build_tree(const CommonFlags& flags) {
  std::optional<std::filesystem::path> file;
  if (!flags.config.empty()) file = flags.config;
  std::vector<std::string> overrides = flags.sets;
  if (flags.seed) overrides.push_back("seed=" + std::to_string(*flags.seed));
  auto tree = selfcf::load_config_tree(file, overrides);
  if (!flags.out.empty()) tree["out"] = flags.out;
  return tree;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised collaborative filtering without negative sampling"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(selfcf::kVersion));

  CommonFlags flags;
  std::string axis;
  std::string values;

  auto* prepare = app.add_subcommand("prepare", "Ingest, filter and split a dataset");
  auto* train = app.add_subcommand("train", "Train a model and evaluate it on the test split");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a saved checkpoint");
  auto* sweep = app.add_subcommand("sweep", "Train once per value of one parameter");
  auto* ablate = app.add_subcommand("ablate", "Run the ablation variants");
  for (auto* cmd : {prepare, train, evaluate, sweep, ablate}) add_common(cmd, flags);
  sweep->add_option("--axis", axis, "Parameter: tau, p, rho, layers, lambda, lr, dim or a key path")
      ->required();
  sweep->add_option("--values", values, "Comma list or start:stop:step")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto tree = build_tree(flags);
    if (prepare->parsed()) {
      selfcf::run_prepare(tree, std::cout);
    } else if (train->parsed()) {
      selfcf::run_train(tree, std::cout);
    } else if (evaluate->parsed()) {
      selfcf::run_evaluate(tree, std::cout);
    } else if (sweep->parsed()) {
      selfcf::run_sweep(tree, axis, selfcf::parse_sweep_values(values), std::cout);
    } else if (ablate->parsed()) {
      const auto rows = selfcf::run_ablate(tree, std::cout);
      std::cout << selfcf::format_ablation_csv(rows);
    }
  } catch (const selfcf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
