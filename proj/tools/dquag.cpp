#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dquag/bench.hpp"
#include "dquag/error.hpp"
#include "dquag/quality.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kProblematic = 1, kUsage = 2, kInternal = 3 };

struct Global {
  std::optional<std::uint64_t> seed;
  bool json = false;
};

void emit(const Global& g, const json& payload, const std::string& human) {
  if (g.json)
    std::cout << payload.dump(2) << "\n";
  else
    std::cout << human;
}

std::uint64_t require_seed(const Global& g, const char* command) {
  if (!g.seed) throw dquag::InvalidArgument(std::string(command) + " requires --seed");
  return *g.seed;
}

dquag::RawTable load_table(const std::string& data, const std::string& schema_path) {
  return dquag::parse_csv(data, dquag::load_schema(schema_path));
}

// ---- graph ----

struct GraphArgs {
  std::string data, schema, mode = "stat", graph, out;
  double threshold = 0.3;
};

dquag::FeatureGraph resolve_graph(const GraphArgs& a, const Global& g, const dquag::RawTable& table,
                                  const dquag::Codec& codec, const dquag::EncodedMatrix& x) {
  if (a.mode == "file") {
    if (a.graph.empty()) throw dquag::InvalidArgument("--mode file needs --graph");
    auto graph = dquag::load_graph(a.graph);
    dquag::check_graph_nodes(graph, codec.feature_names());
    return graph;
  }
  if (a.mode == "llm") {
    auto config = dquag::LlmConfig::from_env();
    if (!config) {
      std::cerr << "warning: DQUAG_LLM_ENDPOINT/DQUAG_LLM_KEY not set, using the statistical graph\n";
      return dquag::build_statistical_graph(codec, x, a.threshold);
    }
    auto inputs = dquag::make_prompt_inputs(table, g.seed.value_or(0));
    auto built = dquag::fetch_graph_llm(inputs, *config, codec, x, a.threshold);
    for (const auto& line : built.log) std::cerr << line << "\n";
    if (built.fallback) std::cerr << "warning: relationship service failed, using the statistical graph\n";
    return built.graph;
  }
  if (a.mode == "stat") return dquag::build_statistical_graph(codec, x, a.threshold);
  throw dquag::InvalidArgument("unknown graph mode '" + a.mode + "'");
}

void add_graph_options(CLI::App* cmd, GraphArgs& a) {
  cmd->add_option("--mode", a.mode, "Graph source")->check(CLI::IsMember({"llm", "stat", "file"}));
  cmd->add_option("--graph", a.graph, "Graph JSON for --mode file");
  cmd->add_option("--corr-threshold", a.threshold, "Correlation threshold for the statistical graph");
}

int cmd_graph(const GraphArgs& a, const Global& g) {
  auto table = load_table(a.data, a.schema);
  auto codec = dquag::fit_codec(table);
  auto x = dquag::encode(table, codec);
  auto graph = resolve_graph(a, g, table, codec, x);
  dquag::save_graph(graph, a.out);
  emit(g, {{"out", a.out}, {"nodes", graph.node_count()}, {"edges", graph.edge_count()}},
       "graph: " + std::to_string(graph.node_count()) + " nodes, " + std::to_string(graph.edge_count()) +
           " edges -> " + a.out + "\n");
  return kOk;
}

// ---- train ----

struct TrainArgs {
  GraphArgs graph;
  dquag::Hyperparams hp;
  std::string encoder = "GAT+GIN";
  std::string log;
};

int cmd_train(TrainArgs a, const Global& g) {
  a.hp.seed = require_seed(g, "train");
  a.hp.variant = dquag::encoder_variant_from_string(a.encoder);
  a.hp.validate();
  auto table = load_table(a.graph.data, a.graph.schema);
  auto codec = dquag::fit_codec(table);
  auto x = dquag::encode(table, codec);
  auto graph = resolve_graph(a.graph, g, table, codec, x);
  dquag::TrainLog log;
  auto bundle = dquag::train(codec, x, graph, a.hp, &log);
  const auto text = dquag::serialize_bundle(bundle);
  dquag::write_text_file(a.graph.out, text);
  const auto hash = dquag::sha256_hex(text);
  if (!a.log.empty()) {
    dquag::RunLog run(a.log);
    for (const auto& e : log.epochs)
      run.event("epoch", {{"epoch", e.epoch}, {"l_validation", e.validation_loss}, {"l_repair", e.repair_loss},
                          {"l_total", e.total_loss}});
    run.event("trained", {{"seconds", log.seconds}, {"threshold", bundle.profile.threshold}, {"sha256", hash}});
  }
  json hp = a.hp;
  std::string human = "hyperparams: alpha=" + dquag::format_number(a.hp.alpha) +
                      " beta=" + dquag::format_number(a.hp.beta) + " lr=" + dquag::format_number(a.hp.learning_rate) +
                      " batch=" + std::to_string(a.hp.batch_size) + " epochs=" + std::to_string(a.hp.epochs) +
                      " percentile=" + dquag::format_number(a.hp.percentile) + "\n";
  human += "threshold: " + dquag::format_number(bundle.profile.threshold) + "\n";
  human += "sha256: " + hash + "\n";
  emit(g, {{"out", a.graph.out}, {"hyperparams", hp}, {"threshold", bundle.profile.threshold}, {"sha256", hash},
           {"seconds", log.seconds}},
       human);
  return kOk;
}

// ---- validate / repair ----

struct ValidateArgs {
  std::string data, model, report;
};

int cmd_validate(const ValidateArgs& a, const Global& g) {
  auto bundle = dquag::load_bundle(a.model);
  auto table = dquag::parse_csv(a.data, bundle.schema());
  auto report = dquag::score(table, bundle);
  auto v = dquag::verdict(report, bundle);
  auto payload = dquag::verdict_to_json(v);
  if (!a.report.empty()) dquag::write_text_file(a.report, payload.dump(2) + "\n");
  emit(g, payload,
       "verdict: " + std::string(dquag::to_string(v.verdict)) + " (r_error " + dquag::format_number(v.r_error) +
           ", " + std::to_string(v.flagged_instances.size()) + " flagged)\n");
  return v.problematic() ? kProblematic : kOk;
}

struct RepairArgs {
  std::string data, model, out, log, report;
};

int cmd_repair(const RepairArgs& a, const Global& g) {
  auto bundle = dquag::load_bundle(a.model);
  auto table = dquag::parse_csv(a.data, bundle.schema());
  auto report = dquag::score(table, bundle);
  auto v = dquag::verdict(report, bundle);
  auto repaired = dquag::repair(table, report, v, bundle);
  dquag::write_csv(repaired.table, a.out);
  if (!a.log.empty()) dquag::write_text_file(a.log, dquag::change_log_csv(repaired.changes));
  if (!a.report.empty()) dquag::write_text_file(a.report, dquag::verdict_to_json(v).dump(2) + "\n");
  emit(g, {{"out", a.out}, {"verdict", dquag::to_string(v.verdict)}, {"changes", repaired.changes.size()}},
       "repaired " + std::to_string(repaired.changes.size()) + " cells -> " + a.out + "\n");
  return kOk;
}

// ---- inject / synth ----

struct InjectArgs {
  std::string plan, data, schema, out, mask;
};

int cmd_inject(const InjectArgs& a, const Global& g) {
  auto plan = dquag::load_plan(a.plan);
  if (g.seed) plan.seed = *g.seed;
  auto table = load_table(a.data, a.schema);
  auto result = dquag::make_dirty(table, plan);
  dquag::write_csv(result.table, a.out);
  if (!a.mask.empty()) dquag::write_text_file(a.mask, dquag::mask_csv(result.mask, table.schema));
  json counts = json::object();
  for (auto kind : {dquag::ErrorKind::missing, dquag::ErrorKind::numeric_anomaly, dquag::ErrorKind::typo,
                    dquag::ErrorKind::conflict})
    counts[std::string(dquag::to_string(kind))] = result.mask.count(kind);
  std::string human = "corrupted " + std::to_string(result.mask.size()) + " cells ->" + " " + a.out + "\n";
  for (auto& [k, v] : counts.items()) human += "  " + k + ": " + std::to_string(v.get<std::size_t>()) + "\n";
  emit(g, {{"out", a.out}, {"cells", result.mask.size()}, {"counts", counts}}, human);
  return kOk;
}

struct SynthArgs {
  std::string spec, out, schema_out, graph_out;
  std::size_t rows = 0;
  bool desk = false;
};

int cmd_synth(const SynthArgs& a, const Global& g) {
  dquag::SyntheticSpec spec = dquag::desk_scale_spec();
  if (!a.spec.empty()) {
    auto j = json::parse(dquag::read_text_file(a.spec), nullptr, false);
    if (j.is_discarded()) throw dquag::InvalidArgument(a.spec + ": not valid JSON");
    spec = j.get<dquag::SyntheticSpec>();
  }
  if (a.rows > 0) spec.rows = a.rows;
  if (g.seed) spec.seed = *g.seed;
  auto table = dquag::gen_synthetic(spec);
  dquag::write_csv(table, a.out);
  if (!a.schema_out.empty()) dquag::save_schema(table.schema, a.schema_out);
  if (!a.graph_out.empty()) dquag::save_graph(dquag::dependency_graph(spec), a.graph_out);
  emit(g, {{"out", a.out}, {"rows", table.row_count()}, {"seed", spec.seed}},
       "wrote " + std::to_string(table.row_count()) + " rows -> " + a.out + "\n");
  return kOk;
}

// ---- bench ----

struct BenchArgs {
  std::string clean, dirty, schema, model, graph, out_dir = "runs";
  std::vector<std::size_t> sizes, dims;
  std::vector<std::uint64_t> seeds{7, 8, 9};
  std::vector<std::string> encoders{"GAT+GIN", "GCN", "GCN+GAT", "GCN+GIN"};
  std::size_t batches = 50;
  int epochs = 50;
  std::string eval_clean;
};

fs::path open_run(const BenchArgs& a, const std::string& kind, const json& extra, std::uint64_t seed) {
  json config{{"bench", kind}, {"seed", seed}, {"clean", a.clean}, {"dirty", a.dirty}, {"model", a.model}};
  config.update(extra);
  return dquag::make_run_dir(a.out_dir, config);
}

int bench_separation(const BenchArgs& a, const Global& g) {
  const auto seed = require_seed(g, "bench");
  auto bundle = dquag::load_bundle(a.model);
  auto clean = dquag::parse_csv(a.clean, bundle.schema());
  auto dirty = dquag::parse_csv(a.dirty, bundle.schema());
  auto dir = open_run(a, "separation", {{"batches", a.batches}}, seed);
  dquag::RunLog log(dir / "log.jsonl");
  log.event("start", {{"bench", "separation"}});
  auto suite = dquag::make_batch_suite(clean.row_count(), dirty.row_count(), seed, a.batches);
  auto result = dquag::run_separation(bundle, clean, dirty, suite);
  auto payload = dquag::to_json(result);
  payload["run_dir"] = dir.string();
  dquag::write_text_file((dir / "result.json").string(), payload.dump(2) + "\n");
  std::string csv = "batch,label,verdict,r_error\n";
  for (std::size_t b = 0; b < result.batches.size(); ++b) {
    const auto& o = result.batches[b];
    csv += std::to_string(b) + "," + (o.dirty ? "dirty" : "clean") + "," + (o.flagged ? "problematic" : "clean") +
           "," + dquag::format_number(o.r_error) + "\n";
  }
  dquag::write_text_file((dir / "batches.csv").string(), csv);
  log.event("done", {{"accuracy", result.accuracy}, {"recall", result.recall}});
  emit(g, {{"accuracy", result.accuracy}, {"recall", result.recall}, {"run_dir", dir.string()}},
       "accuracy " + dquag::format_number(result.accuracy) + ", recall " + dquag::format_number(result.recall) +
           " (" + dir.string() + ")\n");
  return kOk;
}

int bench_scalability(const BenchArgs& a, const Global& g) {
  const auto seed = require_seed(g, "bench");
  auto bundle = dquag::load_bundle(a.model);
  auto sizes = a.sizes.empty() ? std::vector<std::size_t>{10000, 50000, 100000} : a.sizes;
  auto dims = a.dims.empty() ? std::vector<std::size_t>{bundle.feature_count()} : a.dims;
  auto dir = open_run(a, "scalability", {{"sizes", sizes}, {"dims", dims}}, seed);
  dquag::RunLog log(dir / "log.jsonl");
  auto rows = dquag::run_scalability(bundle, sizes, dims, seed);
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"rows", r.rows}, {"dims", r.dims}, {"seconds", r.seconds}});
    log.event("timing", out.back());
  }
  dquag::write_text_file((dir / "timing.csv").string(), dquag::timing_csv(rows));
  dquag::write_text_file((dir / "result.json").string(), out.dump(2) + "\n");
  emit(g, {{"timings", out}, {"run_dir", dir.string()}}, dquag::timing_csv(rows));
  return kOk;
}

int bench_sweep(const BenchArgs& a, const Global& g) {
  const auto seed = require_seed(g, "bench");
  auto bundle = dquag::load_bundle(a.model);
  auto clean = dquag::parse_csv(a.clean, bundle.schema());
  auto dirty = dquag::parse_csv(a.dirty, bundle.schema());
  auto sizes = a.sizes.empty() ? std::vector<std::size_t>{10, 20, 50, 100, 500, 1000} : a.sizes;
  auto dir = open_run(a, "sweep", {{"sizes", sizes}}, seed);
  dquag::RunLog log(dir / "log.jsonl");
  auto rows = dquag::run_sample_size_sweep(bundle, clean, dirty, sizes, seed);
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"size", r.size}, {"accuracy", r.accuracy}, {"recall", r.recall}});
    log.event("size", out.back());
  }
  dquag::write_text_file((dir / "sweep.csv").string(), dquag::sweep_csv(rows));
  dquag::write_text_file((dir / "result.json").string(), out.dump(2) + "\n");
  emit(g, {{"sweep", out}, {"run_dir", dir.string()}}, dquag::sweep_csv(rows));
  return kOk;
}

int bench_ablation(const BenchArgs& a, const Global& g) {
  const auto seed = require_seed(g, "bench");
  const auto schema = dquag::load_schema(a.schema);
  auto train_clean = dquag::parse_csv(a.clean, schema);
  auto dirty = dquag::parse_csv(a.dirty, schema);
  auto eval_clean = a.eval_clean.empty() ? train_clean : dquag::parse_csv(a.eval_clean, schema);
  auto codec = dquag::fit_codec(train_clean);
  auto graph = a.graph.empty() ? dquag::build_statistical_graph(codec, dquag::encode(train_clean, codec))
                               : dquag::load_graph(a.graph);
  dquag::check_graph_nodes(graph, codec.feature_names());
  std::vector<dquag::EncoderVariant> variants;
  for (const auto& e : a.encoders) variants.push_back(dquag::encoder_variant_from_string(e));
  dquag::Hyperparams hp;
  hp.epochs = a.epochs;
  auto dir = open_run(a, "ablation", {{"encoders", a.encoders}, {"seeds", a.seeds}, {"epochs", a.epochs},
                                      {"graph", a.graph}, {"eval_clean", a.eval_clean}},
                      seed);
  dquag::RunLog log(dir / "log.jsonl");
  log.event("start", {{"bench", "ablation"}});
  auto rows = dquag::run_ablation(train_clean, eval_clean, dirty, graph, variants, a.seeds, hp);
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"encoder", dquag::to_string(r.variant)}, {"gaps", r.gaps}, {"mean_gap", r.mean_gap}});
    log.event("variant", out.back());
  }
  dquag::write_text_file((dir / "ablation.csv").string(), dquag::ablation_csv(rows));
  dquag::write_text_file((dir / "result.json").string(), out.dump(2) + "\n");
  emit(g, {{"ablation", out}, {"run_dir", dir.string()}}, dquag::ablation_csv(rows));
  return kOk;
}

int internal_or_usage(const dquag::Error& e) {
  static const std::vector<std::string> internal{"NonFinite", "NonFiniteLoss", "ShapeMismatch", "NotScalar"};
  for (const auto& k : internal)
    if (e.kind() == k) return kInternal;
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  dquag::tune_allocator();
  CLI::App app{"Graph-based data quality validation and repair for tabular data"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Random seed")->type_name("UINT");
  app.add_flag("--json", g.json, "Machine-readable output on stdout");

  GraphArgs graph_args;
  auto* graph = app.add_subcommand("graph", "Build the feature graph");
  graph->add_option("--data", graph_args.data)->required()->check(CLI::ExistingFile);
  graph->add_option("--schema", graph_args.schema)->required();
  graph->add_option("--out", graph_args.out)->required();
  add_graph_options(graph, graph_args);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model bundle on clean data");
  train->add_option("--data", train_args.graph.data)->required()->check(CLI::ExistingFile);
  train->add_option("--schema", train_args.graph.schema)->required();
  train->add_option("--out", train_args.graph.out, "Model bundle path")->required();
  add_graph_options(train, train_args.graph);
  train->add_option("--alpha", train_args.hp.alpha);
  train->add_option("--beta", train_args.hp.beta);
  train->add_option("--lr", train_args.hp.learning_rate);
  train->add_option("--batch", train_args.hp.batch_size);
  train->add_option("--epochs", train_args.hp.epochs);
  train->add_option("--percentile", train_args.hp.percentile);
  train->add_option("--rate-multiplier", train_args.hp.rate_multiplier);
  train->add_option("--hidden", train_args.hp.hidden_dim);
  train->add_option("--encoder", train_args.encoder)->check(CLI::IsMember({"GAT+GIN", "GCN", "GCN+GAT", "GCN+GIN"}));
  train->add_option("--log", train_args.log, "Append per-epoch JSON lines here");

  ValidateArgs validate_args;
  auto* validate = app.add_subcommand("validate", "Score a table; exit 1 when it is problematic");
  validate->add_option("--data", validate_args.data)->required()->check(CLI::ExistingFile);
  validate->add_option("--model", validate_args.model)->required();
  validate->add_option("--report", validate_args.report, "Write the JSON report here");

  RepairArgs repair_args;
  auto* repair = app.add_subcommand("repair", "Repair flagged cells");
  repair->add_option("--data", repair_args.data)->required()->check(CLI::ExistingFile);
  repair->add_option("--model", repair_args.model)->required();
  repair->add_option("--out", repair_args.out)->required();
  repair->add_option("--log", repair_args.log, "Change log CSV");
  repair->add_option("--report", repair_args.report);

  InjectArgs inject_args;
  auto* inject = app.add_subcommand("inject", "Corrupt a clean table");
  inject->add_option("--plan", inject_args.plan)->required();
  inject->add_option("--data", inject_args.data)->required()->check(CLI::ExistingFile);
  inject->add_option("--schema", inject_args.schema)->required();
  inject->add_option("--out", inject_args.out)->required();
  inject->add_option("--mask", inject_args.mask);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic table");
  synth->add_option("--spec", synth_args.spec, "Generator spec JSON (default: desk-scale)");
  synth->add_option("--rows", synth_args.rows);
  synth->add_option("--out", synth_args.out)->required();
  synth->add_option("--schema-out", synth_args.schema_out);
  synth->add_option("--graph-out", synth_args.graph_out, "Write the generator's dependency graph");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Benchmark protocols");
  bench->require_subcommand(1);
  bench->fallthrough();
  bench->add_option("--out-dir", bench_args.out_dir, "Root of run directories");
  auto* sep = bench->add_subcommand("separation", "Clean/dirty batch separation");
  sep->add_option("--clean", bench_args.clean)->required();
  sep->add_option("--dirty", bench_args.dirty)->required();
  sep->add_option("--model", bench_args.model)->required();
  sep->add_option("--batches", bench_args.batches, "Batches per label");
  auto* scal = bench->add_subcommand("scalability", "Validation wall time by rows and feature count");
  scal->add_option("--model", bench_args.model)->required();
  scal->add_option("--sizes", bench_args.sizes)->delimiter(',');
  scal->add_option("--dims", bench_args.dims)->delimiter(',');
  auto* sweep = bench->add_subcommand("sweep", "Accuracy by sample size");
  sweep->add_option("--clean", bench_args.clean)->required();
  sweep->add_option("--dirty", bench_args.dirty)->required();
  sweep->add_option("--model", bench_args.model)->required();
  sweep->add_option("--sizes", bench_args.sizes)->delimiter(',');
  auto* abl = bench->add_subcommand("ablation", "Flagged-rate gap per encoder variant");
  abl->add_option("--clean", bench_args.clean, "Clean training table")->required();
  abl->add_option("--dirty", bench_args.dirty)->required();
  abl->add_option("--schema", bench_args.schema)->required();
  abl->add_option("--eval-clean", bench_args.eval_clean, "Clean table for the clean-side rate");
  abl->add_option("--graph", bench_args.graph, "Graph JSON (default: statistical)");
  abl->add_option("--seeds", bench_args.seeds)->delimiter(',');
  abl->add_option("--encoders", bench_args.encoders)->delimiter(',');
  abl->add_option("--epochs", bench_args.epochs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*graph) return cmd_graph(graph_args, g);
    if (*train) return cmd_train(train_args, g);
    if (*validate) return cmd_validate(validate_args, g);
    if (*repair) return cmd_repair(repair_args, g);
    if (*inject) return cmd_inject(inject_args, g);
    if (*synth) return cmd_synth(synth_args, g);
    if (*sep) return bench_separation(bench_args, g);
    if (*scal) return bench_scalability(bench_args, g);
    if (*sweep) return bench_sweep(bench_args, g);
    if (*abl) return bench_ablation(bench_args, g);
  } catch (const dquag::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return internal_or_usage(e);
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
