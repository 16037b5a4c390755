#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "selfcf/errors.hpp"
#include "selfcf/runner.hpp"

using namespace selfcf;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("selfcf_runner_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json quick_tree(const std::filesystem::path& out) {
  auto tree = load_config_tree(std::nullopt, {"model.dim=8", "model.layers=1", "train.batch_size=256",
                                              "train.learning_rate=0.01", "train.max_epochs=3",
                                              "data.synthetic.users=40", "data.synthetic.items=24"});
  tree["out"] = out.string();
  return tree;
}

}  // namespace

TEST_CASE("config overrides") {
  auto tree = default_config_tree();
  apply_override(tree, "perturbation.tau=0.3");
  CHECK(tree["perturbation"]["tau"] == 0.3);
  apply_override(tree, "model.backbone=mf");
  CHECK(tree["model"]["backbone"] == "mf");
  apply_override(tree, "eval.ks=[10,20]");
  CHECK(tree["eval"]["ks"].size() == 2);
  apply_override(tree, "model.layers=3.0");
  CHECK(tree["model"]["layers"] == 3);
  CHECK_THROWS_AS(apply_override(tree, "model.layers=2.5"), ConfigError);
  CHECK_THROWS_AS(apply_override(tree, "model.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(tree, "train.learning_rate=fast"), ConfigError);
  CHECK_THROWS_AS(apply_override(tree, "novalue"), ConfigError);
}

TEST_CASE("config file and typed config") {
  const auto dir = fresh_dir("cfg");
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "c.json") << R"({"model": {"framework": "selfcf_he"}, "perturbation": {"tau": 0.7}})";
  }
  const auto tree = load_config_tree(dir / "c.json", {"seed=5"});
  const auto cfg = parse_run_config(tree);
  CHECK(cfg.framework == Framework::selfcf_he);
  CHECK(cfg.model.perturbation.kind == PerturbationKind::historical);
  CHECK(cfg.model.perturbation.tau == 0.7);
  CHECK(cfg.model.train.seed == 5);
  CHECK(cfg.eval.ks == std::vector<std::size_t>{20, 50});

  auto ep_mf = default_config_tree();
  apply_override(ep_mf, "model.framework=selfcf_ep");
  apply_override(ep_mf, "model.backbone=mf");
  CHECK_THROWS_AS(parse_run_config(ep_mf), ConfigError);

  auto raw = default_config_tree();
  apply_override(raw, "data.source=raw");
  CHECK_THROWS_AS(parse_run_config(raw), ConfigError);
  CHECK_THROWS_AS(load_config_tree(dir / "missing.json"), IoError);
}

TEST_CASE("config hash ignores the output directory") {
  auto a = default_config_tree();
  auto b = default_config_tree();
  b["out"] = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  apply_override(b, "seed=1");
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("sweep values and axes") {
  CHECK(parse_sweep_values("0.1:0.9:0.1").size() == 9);
  CHECK(parse_sweep_values("0.1:0.9:0.1")[2] == 0.3);
  CHECK(parse_sweep_values("1:4:1") == std::vector<double>{1, 2, 3, 4});
  CHECK(parse_sweep_values("0.05:0.95:0.05").size() == 19);
  CHECK(parse_sweep_values("0.05, 0.1,0.2") == std::vector<double>{0.05, 0.1, 0.2});
  CHECK_THROWS_AS(parse_sweep_values("1:0:1"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_values("a,b"), ConfigError);
  CHECK(resolve_axis("tau") == "perturbation.tau");
  CHECK(resolve_axis("p") == "perturbation.dropout");
  CHECK(resolve_axis("train.batch_size") == "train.batch_size");
  CHECK_THROWS_AS(resolve_axis("temperature"), ConfigError);
  CHECK_THROWS_AS(resolve_axis("model.backbone"), ConfigError);
}

TEST_CASE("prepare writes the canonical dataset and stats") {
  const auto dir = fresh_dir("prepare");
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "raw.csv") << "a,x,5,1\na,y,3,2\nb,x,4,3\nb,x,2,4\n";
  }
  auto tree = default_config_tree();
  apply_override(tree, "data.source=raw");
  tree["data"]["path"] = (dir / "raw.csv").string();
  tree["out"] = (dir / "out").string();
  std::ostringstream log;
  const auto ds = run_prepare(tree, log);
  CHECK(ds.num_users() == 2);
  CHECK(ds.num_items() == 2);
  CHECK(ds.num_interactions() == 3);
  // 1 - 3/(2*2)
  CHECK(log.str().find("sparsity      25.0000%") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "out" / "train.tsv"));
  CHECK(std::filesystem::exists(dir / "out" / "manifest.json"));

  auto prepared = default_config_tree();
  apply_override(prepared, "data.source=prepared");
  prepared["data"]["path"] = (dir / "out").string();
  const auto back = load_dataset(parse_run_config(prepared).data);
  CHECK(back.train() == ds.train());

  {
    std::ofstream(dir / "empty.csv") << "";
  }
  tree["data"]["path"] = (dir / "empty.csv").string();
  CHECK_THROWS_AS(run_prepare(tree, log), IoError);
}

TEST_CASE("train is deterministic and evaluate reproduces its report") {
  const auto a = fresh_dir("train_a");
  const auto b = fresh_dir("train_b");
  std::ostringstream log;
  const auto ra = run_train(quick_tree(a), log);
  run_train(quick_tree(b), log);
  for (const char* f : {"train.log.jsonl", "checkpoint.bin", "report.json", "report.csv", "manifest.json"}) {
    INFO(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto ev = run_evaluate(quick_tree(a), log);
  CHECK(ev.recall == ra.report.recall);
  CHECK(ev.ndcg == ra.report.ndcg);
  CHECK(ra.parameter_count == (40 + 24) * 8 + 8 * 8 + 8);
}

TEST_CASE("supervised_bpr through the runner") {
  auto tree = quick_tree(fresh_dir("bpr"));
  apply_override(tree, "model.framework=supervised_bpr");
  apply_override(tree, "model.backbone=mf");
  std::ostringstream log;
  const auto out = run_train(tree, log);
  for (double v : out.report.recall) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(out.parameter_count == (40 + 24) * 8);
  CHECK_THROWS_AS(run_ablate(tree, log), ConfigError);
}

TEST_CASE("sweep and ablate") {
  std::ostringstream log;
  const auto dir = fresh_dir("sweep");
  auto tree = quick_tree(dir);
  apply_override(tree, "train.max_epochs=1");
  const auto rows = run_sweep(tree, "layers", {1, 2}, log);
  CHECK(rows.size() == 2);
  CHECK(std::filesystem::exists(dir / "sweep.csv"));
  CHECK(std::filesystem::exists(dir / "model.layers=2" / "report.json"));
  const auto csv = format_sweep_csv(rows);
  CHECK(csv.rfind("axis,value,k,metric,score,best_epoch\n", 0) == 0);
  CHECK_THROWS_AS(run_sweep(tree, "layers", {1.5}, log), ConfigError);
  CHECK_THROWS_AS(run_sweep(tree, "bogus", {1}, log), ConfigError);

  apply_override(tree, "train.max_epochs=0");
  tree["out"] = (fresh_dir("ablate")).string();
  const auto ab = run_ablate(tree, log);
  REQUIRE(ab.size() == ablation_variants().size());
  for (std::size_t k = 0; k < ab.size(); ++k) CHECK(ab[k].variant == ablation_variants()[k]);
  CHECK(ablation_variants() == std::vector<std::string>{"baseline", "no_predictor", "fixed_random_predictor",
                                                        "2layer_predictor", "cross_entropy",
                                                        "no_sg_with_pred", "no_sg_no_pred"});
  const auto table = format_ablation_csv(ab);
  CHECK(table.rfind("variant,recall@20,ndcg@20,recall@50,ndcg@50,best_epoch\n", 0) == 0);
  CHECK(table == format_ablation_csv(run_ablate(tree, log)));
}
