#include "selfcf/runner.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "selfcf/errors.hpp"

namespace selfcf {
namespace {

using nlohmann::json;

json::json_pointer pointer_for(std::string_view dotted) {
  if (dotted.empty()) throw ConfigError("empty config key");
  std::string p = "/";
  for (char c : dotted) p += c == '.' ? '/' : c;
  return json::json_pointer(p);
}

std::string type_name(const json& v) {
  if (v.is_boolean()) return "bool";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

// Copies `user` over `base`, rejecting keys and types the defaults do not have.
void merge_checked(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, where);
      continue;
    }
    if (slot.is_number_integer() && value.is_number_float()) {
      const double d = value.get<double>();
      if (d != std::floor(d) || d < 0) {
        throw ConfigError("config key '" + where + "' expects a non-negative integer");
      }
      slot = static_cast<std::uint64_t>(d);
      continue;
    }
    if (slot.is_number_integer() && value.is_number_integer() && value.get<std::int64_t>() < 0) {
      throw ConfigError("config key '" + where + "' expects a non-negative integer");
    }
    if (type_name(slot) != type_name(value)) {
      throw ConfigError("config key '" + where + "' expects " + type_name(slot) + ", got " +
                        type_name(value));
    }
    slot = value;
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::filesystem::path prepare_out(const RunConfig& config) {
  if (config.out.empty()) throw ConfigError("no output directory (set out or --out)");
  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) throw IoError("cannot create " + config.out.string() + ": " + ec.message());
  return config.out;
}

// The output directory does not change results, so it stays out of the hash.
json hashed_view(const json& tree) {
  json view = tree;
  view.erase("out");
  return view;
}

void write_manifest(const std::filesystem::path& dir, std::string_view command, const json& tree,
                    const std::vector<std::string>& files) {
  nlohmann::ordered_json m;
  m["command"] = command;
  m["config_hash"] = config_hash(tree);
  m["seed"] = tree.at("seed");
  nlohmann::ordered_json versions;
  versions["selfcf"] = kVersion;
#if defined(__VERSION__)
  versions["compiler"] = __VERSION__;
#endif
  versions["cplusplus"] = static_cast<std::int64_t>(__cplusplus);
  versions["json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                     std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                     std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  m["versions"] = versions;
  m["files"] = files;
  m["config"] = hashed_view(tree);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void stamp(MetricsReport& report, const json& tree) {
  report.seed = tree.at("seed").get<std::uint64_t>();
  report.config_hash = config_hash(tree);
}

std::string format_number(double v) {
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

std::size_t decimals_of(std::string_view s) {
  const auto dot = s.find('.');
  if (dot == std::string_view::npos) return 0;
  std::size_t end = s.find_first_of("eE", dot);
  if (end == std::string_view::npos) end = s.size();
  return end - dot - 1;
}

double parse_double(std::string_view s) {
  const std::string str(s);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(str, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + str + "'");
  }
  if (used != str.size()) throw ConfigError("not a number: '" + str + "'");
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Framework parse_framework(std::string_view name) {
  if (name == "selfcf_he") return Framework::selfcf_he;
  if (name == "selfcf_ed") return Framework::selfcf_ed;
  if (name == "selfcf_ep") return Framework::selfcf_ep;
  if (name == "supervised_bpr" || name == "bpr") return Framework::supervised_bpr;
  throw ConfigError("unknown framework '" + std::string(name) + "'");
}

std::string_view to_string(Framework framework) {
  switch (framework) {
    case Framework::selfcf_he: return "selfcf_he";
    case Framework::selfcf_ed: return "selfcf_ed";
    case Framework::selfcf_ep: return "selfcf_ep";
    case Framework::supervised_bpr: return "supervised_bpr";
  }
  return "?";
}

json default_config_tree() {
  const SelfCFConfig model;
  const EvalOptions eval;
  const BlockDatasetSpec block;
  return json{
      {"seed", model.train.seed},
      {"out", "runs"},
      {"data",
       {{"source", "synthetic"},
        {"path", ""},
        {"format", "user,item,rating,time"},
        {"delimiter", ""},
        {"skip_header", false},
        {"kcore", 0},
        {"split", {0.8, 0.1, 0.1}},
        {"synthetic",
         {{"users", block.users},
          {"items", block.items},
          {"blocks", block.blocks},
          {"interactions_per_user", block.interactions_per_user},
          {"noise", block.noise},
          {"seed", block.seed}}}}},
      {"model",
       {{"framework", "selfcf_ed"},
        {"backbone", "lightgcn"},
        {"dim", model.dim},
        {"layers", model.layers}}},
      {"perturbation",
       {{"tau", model.perturbation.tau},
        {"dropout", model.perturbation.dropout},
        {"prune", model.perturbation.prune},
        {"granularity", "element"},
        {"store_mixed", model.perturbation.store_mixed}}},
      {"train",
       {{"batch_size", model.train.batch_size},
        {"learning_rate", model.train.learning_rate},
        {"l2", model.train.l2},
        {"max_epochs", model.train.max_epochs},
        {"patience", model.train.patience},
        {"validation_k", model.train.validation_k},
        {"log_wall_time", model.train.log_wall_time}}},
      {"ablation",
       {{"no_predictor", false},
        {"no_stop_gradient", false},
        {"cross_entropy_loss", false},
        {"two_layer_predictor", false},
        {"fixed_predictor", false}}},
      {"eval",
       {{"ks", eval.ks},
        {"phase", "test"},
        {"bucket_edges", eval.bucket_edges},
        {"checkpoint", ""}}},
  };
}

void apply_override(json& tree, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string raw = trim(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  // Build {"a": {"b": value}} and merge it so the same checks apply.
  json patch = json::object();
  patch[pointer_for(key)] = value;
  merge_checked(tree, patch, "");
}

json load_config_tree(const std::optional<std::filesystem::path>& file,
                      const std::vector<std::string>& overrides) {
  json tree = default_config_tree();
  if (file) merge_checked(tree, read_json_file(*file), "");
  for (const auto& o : overrides) apply_override(tree, o);
  return tree;
}

RunConfig parse_run_config(const json& input) {
  // Re-merge so hand-built trees get the same key and type checks.
  json tree = default_config_tree();
  merge_checked(tree, input, "");

  RunConfig c;
  try {
    const auto& d = tree["data"];
    const std::string source = d["source"];
    if (source == "synthetic") {
      c.data.source = DataSource::synthetic;
    } else if (source == "raw") {
      c.data.source = DataSource::raw;
    } else if (source == "prepared") {
      c.data.source = DataSource::prepared;
    } else {
      throw ConfigError("unknown data.source '" + source + "'");
    }
    c.data.path = d["path"].get<std::string>();
    c.data.ingest.order = FieldOrder::parse(d["format"].get<std::string>());
    c.data.ingest.delimiter = d["delimiter"].get<std::string>();
    c.data.ingest.skip_header = d["skip_header"];
    c.data.kcore = d["kcore"];
    const auto split = d["split"].get<std::vector<double>>();
    if (split.size() != 3) throw ConfigError("data.split needs three ratios");
    c.data.split = {split[0], split[1], split[2]};
    if (std::abs(split[0] + split[1] + split[2] - 1.0) > 1e-9 || split[0] <= 0.0 ||
        split[1] <= 0.0 || split[2] <= 0.0) {
      throw ConfigError("data.split ratios must be positive and sum to 1");
    }
    const auto& s = d["synthetic"];
    c.data.synthetic.users = s["users"];
    c.data.synthetic.items = s["items"];
    c.data.synthetic.blocks = s["blocks"];
    c.data.synthetic.interactions_per_user = s["interactions_per_user"];
    c.data.synthetic.noise = s["noise"];
    c.data.synthetic.seed = s["seed"];
    if (c.data.source != DataSource::synthetic && c.data.path.empty()) {
      throw ConfigError("data.path is required for data.source=" + source);
    }

    const auto& m = tree["model"];
    c.framework = parse_framework(m["framework"].get<std::string>());
    c.model.backbone = parse_backbone(m["backbone"].get<std::string>());
    c.model.dim = m["dim"];
    c.model.layers = m["layers"];

    const auto& p = tree["perturbation"];
    c.model.perturbation.tau = p["tau"];
    c.model.perturbation.dropout = p["dropout"];
    c.model.perturbation.prune = p["prune"];
    const std::string gran = p["granularity"];
    if (gran == "element") {
      c.model.perturbation.granularity = DropoutGranularity::element;
    } else if (gran == "row") {
      c.model.perturbation.granularity = DropoutGranularity::row;
    } else {
      throw ConfigError("unknown perturbation.granularity '" + gran + "'");
    }
    c.model.perturbation.store_mixed = p["store_mixed"];
    switch (c.framework) {
      case Framework::selfcf_he: c.model.perturbation.kind = PerturbationKind::historical; break;
      case Framework::selfcf_ed: c.model.perturbation.kind = PerturbationKind::dropout; break;
      case Framework::selfcf_ep: c.model.perturbation.kind = PerturbationKind::edge_prune; break;
      case Framework::supervised_bpr: c.model.perturbation.kind = PerturbationKind::dropout; break;
    }

    const auto& t = tree["train"];
    c.model.train.seed = tree["seed"];
    c.model.train.batch_size = t["batch_size"];
    c.model.train.learning_rate = t["learning_rate"];
    c.model.train.l2 = t["l2"];
    c.model.train.max_epochs = t["max_epochs"];
    c.model.train.patience = t["patience"];
    c.model.train.validation_k = t["validation_k"];
    c.model.train.log_wall_time = t["log_wall_time"];

    const auto& a = tree["ablation"];
    c.model.ablation.no_predictor = a["no_predictor"];
    c.model.ablation.no_stop_gradient = a["no_stop_gradient"];
    c.model.ablation.cross_entropy = a["cross_entropy_loss"];
    c.model.ablation.two_layer_predictor = a["two_layer_predictor"];
    c.model.ablation.fixed_predictor = a["fixed_predictor"];

    const auto& e = tree["eval"];
    c.eval.ks = e["ks"].get<std::vector<std::size_t>>();
    c.eval.phase = parse_phase(e["phase"].get<std::string>());
    c.eval.bucket_edges = e["bucket_edges"].get<std::vector<std::size_t>>();
    c.checkpoint = e["checkpoint"].get<std::string>();
    c.out = tree["out"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("data.format: ") + e.what());
  }

  if (c.eval.ks.empty()) throw ConfigError("eval.ks must not be empty");
  for (std::size_t k : c.eval.ks) {
    if (k == 0) throw ConfigError("eval.ks values must be positive");
  }
  try {
    if (c.framework == Framework::supervised_bpr) {
      BprConfig{c.model.backbone, c.model.dim, c.model.layers, c.model.train}.validate();
    } else {
      c.model.validate();
    }
  } catch (const InvalidParameter& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::string config_hash(const json& tree) {
  const std::string canonical = hashed_view(tree).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

InteractionDataset load_dataset(const DataConfig& data) {
  switch (data.source) {
    case DataSource::synthetic:
      return remap_and_split(make_block_interactions(data.synthetic), data.split);
    case DataSource::prepared:
      return read_canonical(data.path);
    case DataSource::raw: {
      auto raw = deduplicate(ingest(data.path, data.ingest));
      if (data.kcore > 0) raw = kcore_filter(raw, data.kcore);
      if (raw.empty()) throw IoError("no interactions left after filtering " + data.path.string());
      return remap_and_split(raw, data.split);
    }
  }
  throw ConfigError("unknown data source");
}

std::string format_stats(const InteractionDataset& dataset) {
  std::ostringstream s;
  s << "users         " << dataset.num_users() << '\n'
    << "items         " << dataset.num_items() << '\n'
    << "interactions  " << dataset.num_interactions() << '\n'
    << "train         " << dataset.train().size() << '\n'
    << "validation    " << dataset.validation().size() << '\n'
    << "test          " << dataset.test().size() << '\n'
    << "sparsity      " << std::fixed << std::setprecision(4) << dataset.sparsity() * 100.0
    << "%\n";
  return s.str();
}

TrainedModel train_model(const RunConfig& config, const InteractionDataset& dataset) {
  TrainedModel out;
  if (config.framework == Framework::supervised_bpr) {
    BprConfig bpr{config.model.backbone, config.model.dim, config.model.layers, config.model.train};
    BprFit fit = fit_bpr(dataset, bpr);
    out.model.encoder = std::move(fit.encoder);
    out.result = std::move(fit.result);
    ForwardContext ctx;
    const auto adj = build_normalized_adjacency(dataset);
    out.output = encoder_forward(bpr.backbone, out.model.encoder, &adj.matrix, Batch{}, ctx);
    return out;
  }
  SelfCFFit fit = selfcf::fit(dataset, config.model);
  out.model = std::move(fit.model);
  out.result = std::move(fit.result);
  ForwardContext ctx;
  const auto adj = build_normalized_adjacency(dataset);
  out.output =
      encoder_forward(config.model.backbone, out.model.encoder, &adj.matrix, Batch{}, ctx);
  return out;
}

ScoreFn model_scorer(const RunConfig& config, const EncoderOutput& output,
                     const Predictor& predictor) {
  if (config.framework == Framework::supervised_bpr) {
    return inner_product_scorer(output.users, output.items);
  }
  return cross_prediction_scorer(output.users, output.items, predictor);
}

InteractionDataset run_prepare(const json& tree, std::ostream& log) {
  const RunConfig config = parse_run_config(tree);
  InteractionDataset dataset = load_dataset(config.data);
  const auto dir = prepare_out(config);
  write_canonical(dataset, dir);
  const std::string stats = format_stats(dataset);
  write_text(dir / "stats.txt", stats);
  write_manifest(dir, "prepare", tree,
                 {"train.tsv", "valid.tsv", "test.tsv", "dataset.json", "stats.txt"});
  log << stats;
  return dataset;
}

TrainOutcome run_train(const json& tree, std::ostream& log) {
  const RunConfig config = parse_run_config(tree);
  const InteractionDataset dataset = load_dataset(config.data);
  const auto dir = prepare_out(config);

  TrainedModel trained = train_model(config, dataset);
  TrainOutcome outcome;
  outcome.result = trained.result;
  outcome.parameter_count = count_parameters(dataset.num_users(), dataset.num_items(),
                                             config.model.dim, 0) +
                            trained.model.predictor.parameter_count();
  outcome.report = evaluate(dataset, model_scorer(config, trained.output, trained.model.predictor),
                            config.eval);
  stamp(outcome.report, tree);

  write_text(dir / "train.log.jsonl",
             format_epoch_log(trained.result.log, config.model.train.validation_k));
  write_checkpoint(dir / "checkpoint.bin", trained.model.encoder, trained.model.predictor);
  auto report_json = to_json(outcome.report);
  report_json["best_epoch"] = trained.result.best_epoch;
  report_json["epochs_run"] = trained.result.epochs_run;
  report_json["best_val_recall"] = trained.result.best_val_recall;
  report_json["parameter_count"] = outcome.parameter_count;
  write_text(dir / "report.json", report_json.dump(2) + "\n");
  write_text(dir / "report.csv", to_csv(outcome.report));
  write_manifest(dir, "train", tree,
                 {"train.log.jsonl", "checkpoint.bin", "report.json", "report.csv"});

  log << "framework " << to_string(config.framework) << ", backbone "
      << to_string(config.model.backbone) << ", epochs " << trained.result.epochs_run
      << ", best epoch " << trained.result.best_epoch << '\n';
  for (std::size_t j = 0; j < outcome.report.ks.size(); ++j) {
    log << "recall@" << outcome.report.ks[j] << ' ' << format_number(outcome.report.recall[j])
        << "  ndcg@" << outcome.report.ks[j] << ' ' << format_number(outcome.report.ndcg[j])
        << '\n';
  }
  return outcome;
}

MetricsReport run_evaluate(const json& tree, std::ostream& log) {
  const RunConfig config = parse_run_config(tree);
  const InteractionDataset dataset = load_dataset(config.data);
  const auto dir = prepare_out(config);
  const auto ckpt = config.checkpoint.empty() ? dir / "checkpoint.bin" : config.checkpoint;
  const SelfCFModel model = read_checkpoint(ckpt);
  if (model.encoder.num_users() != dataset.num_users() ||
      model.encoder.num_items() != dataset.num_items()) {
    throw InvalidDimension("checkpoint does not match the dataset shape");
  }
  const auto adj = build_normalized_adjacency(dataset);
  ForwardContext ctx;
  const EncoderOutput output =
      encoder_forward(config.model.backbone, model.encoder, &adj.matrix, Batch{}, ctx);
  MetricsReport report = evaluate(dataset, model_scorer(config, output, model.predictor), config.eval);
  stamp(report, tree);
  write_text(dir / "evaluate.json", to_json(report).dump(2) + "\n");
  write_text(dir / "evaluate.csv", to_csv(report));
  write_manifest(dir, "evaluate", tree, {"evaluate.json", "evaluate.csv"});
  for (std::size_t j = 0; j < report.ks.size(); ++j) {
    log << "recall@" << report.ks[j] << ' ' << format_number(report.recall[j]) << "  ndcg@"
        << report.ks[j] << ' ' << format_number(report.ndcg[j]) << '\n';
  }
  return report;
}

std::string resolve_axis(std::string_view axis) {
  static const std::vector<std::pair<std::string_view, std::string_view>> aliases{
      {"tau", "perturbation.tau"},   {"p", "perturbation.dropout"},
      {"rho", "perturbation.prune"}, {"layers", "model.layers"},
      {"lambda", "train.l2"},        {"lr", "train.learning_rate"},
      {"dim", "model.dim"},
  };
  for (const auto& [name, path] : aliases) {
    if (axis == name) return std::string(path);
  }
  const json defaults = default_config_tree();
  const auto ptr = pointer_for(axis);
  if (!defaults.contains(ptr) || !defaults[ptr].is_number()) {
    throw ConfigError("unknown sweep axis '" + std::string(axis) + "'");
  }
  return std::string(axis);
}

std::vector<double> parse_sweep_values(std::string_view spec) {
  std::vector<double> values;
  if (spec.find(':') != std::string_view::npos) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : spec) {
      if (c == ':') {
        parts.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    parts.push_back(trim(cur));
    if (parts.size() != 3) throw ConfigError("range must be start:stop:step");
    const double start = parse_double(parts[0]);
    const double stop = parse_double(parts[1]);
    const double step = parse_double(parts[2]);
    if (!(step > 0.0) || stop < start) throw ConfigError("range needs step > 0 and stop >= start");
    const std::size_t places =
        std::max({decimals_of(parts[0]), decimals_of(parts[1]), decimals_of(parts[2])});
    const double scale = std::pow(10.0, static_cast<double>(places));
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t k = 0; k < count; ++k) {
      values.push_back(std::round((start + static_cast<double>(k) * step) * scale) / scale);
    }
  } else {
    std::string cur;
    for (std::size_t k = 0; k <= spec.size(); ++k) {
      if (k == spec.size() || spec[k] == ',') {
        const std::string t = trim(cur);
        if (t.empty()) throw ConfigError("empty value in sweep list");
        values.push_back(parse_double(t));
        cur.clear();
      } else {
        cur += spec[k];
      }
    }
  }
  if (values.empty()) throw ConfigError("no sweep values");
  return values;
}

std::vector<SweepRow> run_sweep(const json& tree, std::string_view axis,
                                const std::vector<double>& values, std::ostream& log) {
  const std::string path = resolve_axis(axis);
  const auto ptr = pointer_for(path);
  const RunConfig base = parse_run_config(tree);
  const auto dir = prepare_out(base);
  const bool integral = default_config_tree()[ptr].is_number_integer();

  std::vector<SweepRow> rows;
  for (double v : values) {
    json run = tree;
    if (integral) {
      if (v != std::floor(v) || v < 0) {
        throw ConfigError("axis '" + path + "' takes non-negative integers");
      }
      run[ptr] = static_cast<std::uint64_t>(v);
    } else {
      run[ptr] = v;
    }
    run["out"] = (dir / (path + "=" + format_number(v))).string();
    log << path << " = " << format_number(v) << '\n';
    TrainOutcome outcome = run_train(run, log);
    rows.push_back({path, v, std::move(outcome.report), outcome.result.best_epoch});
  }
  write_text(dir / "sweep.csv", format_sweep_csv(rows));
  write_manifest(dir, "sweep", tree, {"sweep.csv"});
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream s;
  s << "axis,value,k,metric,score,best_epoch\n";
  s.precision(17);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.report.ks.size(); ++j) {
      s << r.axis << ',' << format_number(r.value) << ',' << r.report.ks[j] << ",recall,"
        << r.report.recall[j] << ',' << r.best_epoch << '\n';
      s << r.axis << ',' << format_number(r.value) << ',' << r.report.ks[j] << ",ndcg,"
        << r.report.ndcg[j] << ',' << r.best_epoch << '\n';
    }
  }
  return s.str();
}

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> variants{
      "baseline",      "no_predictor",    "fixed_random_predictor", "2layer_predictor",
      "cross_entropy", "no_sg_with_pred", "no_sg_no_pred",
  };
  return variants;
}

void apply_ablation_variant(json& tree, std::string_view variant) {
  auto& a = tree["ablation"];
  for (auto& [key, value] : a.items()) value = false;
  if (variant == "baseline") return;
  if (variant == "no_predictor") {
    a["no_predictor"] = true;
  } else if (variant == "fixed_random_predictor") {
    a["fixed_predictor"] = true;
  } else if (variant == "2layer_predictor") {
    a["two_layer_predictor"] = true;
  } else if (variant == "cross_entropy") {
    a["cross_entropy_loss"] = true;
  } else if (variant == "no_sg_with_pred") {
    a["no_stop_gradient"] = true;
  } else if (variant == "no_sg_no_pred") {
    a["no_stop_gradient"] = true;
    a["no_predictor"] = true;
  } else {
    throw ConfigError("unknown ablation variant '" + std::string(variant) + "'");
  }
}

std::vector<AblationRow> run_ablate(const json& tree, std::ostream& log) {
  const RunConfig base = parse_run_config(tree);
  if (base.framework == Framework::supervised_bpr) {
    throw ConfigError("ablations apply to the selfcf frameworks only");
  }
  const auto dir = prepare_out(base);
  std::vector<AblationRow> rows;
  for (const auto& variant : ablation_variants()) {
    json run = tree;
    apply_ablation_variant(run, variant);
    run["out"] = (dir / variant).string();
    log << "variant " << variant << '\n';
    TrainOutcome outcome = run_train(run, log);
    rows.push_back({variant, std::move(outcome.report), outcome.result.best_epoch});
  }
  write_text(dir / "ablation.csv", format_ablation_csv(rows));
  write_manifest(dir, "ablate", tree, {"ablation.csv"});
  return rows;
}

std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream s;
  s.precision(17);
  s << "variant";
  if (!rows.empty()) {
    for (std::size_t k : rows.front().report.ks) s << ",recall@" << k << ",ndcg@" << k;
  }
  s << ",best_epoch\n";
  for (const auto& r : rows) {
    s << r.variant;
    for (std::size_t j = 0; j < r.report.ks.size(); ++j) {
      s << ',' << r.report.recall[j] << ',' << r.report.ndcg[j];
    }
    s << ',' << r.best_epoch << '\n';
  }
  return s.str();
}

}  // namespace selfcf
