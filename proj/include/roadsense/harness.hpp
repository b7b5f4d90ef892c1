#pragma once

// Config-driven experiments: strategy comparison over budgets and seeds,
// ablation arms, model comparison and road-class coverage.
//
// Every run writes
//   report.json     deterministic payload (no clocks)
//   plot_data.csv   tidy rows: strategy,budget,seed,metric,value
//   manifest.json   config hash, seeds, version, timestamps, wall time
// A failing run still flushes the cells finished so far with status "partial".

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "roadsense/agent.hpp"
#include "roadsense/baselines.hpp"
#include "roadsense/error.hpp"
#include "roadsense/graph.hpp"
#include "roadsense/graph_io.hpp"
#include "roadsense/metrics.hpp"
#include "roadsense/model.hpp"
#include "roadsense/synthetic.hpp"
#include "roadsense/util.hpp"

#ifndef ROADSENSE_VERSION
#define ROADSENSE_VERSION "0.1.0"
#endif

namespace roadsense {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::string_view kVersion = ROADSENSE_VERSION;

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

inline json to_json(const SyntheticConfig& c) {
  return {{"n_nodes", c.n_nodes},
          {"avg_degree", c.avg_degree},
          {"class_mix", c.class_mix},
          {"covariate_noise_sd", c.covariate_noise_sd},
          {"seed", c.seed},
          {"volume",
           {{"diffusion_steps", c.volume.diffusion_steps},
            {"source_count", c.volume.source_count},
            {"intensity_min", c.volume.intensity_min},
            {"intensity_max", c.volume.intensity_max},
            {"decay", c.volume.decay},
            {"noise_sd", c.volume.noise_sd}}}};
}

inline SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig c;
  c.n_nodes = j.value("n_nodes", c.n_nodes);
  c.avg_degree = j.value("avg_degree", c.avg_degree);
  if (j.contains("class_mix")) {
    const auto mix = j.at("class_mix").get<std::vector<double>>();
    if (mix.size() != kNumRoadClasses) fail(ErrorCode::InvalidConfig, "class_mix needs 6 entries");
    std::copy(mix.begin(), mix.end(), c.class_mix.begin());
  }
  c.covariate_noise_sd = j.value("covariate_noise_sd", c.covariate_noise_sd);
  c.seed = j.value("seed", c.seed);
  if (j.contains("volume")) {
    const auto& v = j.at("volume");
    c.volume.diffusion_steps = v.value("diffusion_steps", c.volume.diffusion_steps);
    c.volume.source_count = v.value("source_count", c.volume.source_count);
    c.volume.intensity_min = v.value("intensity_min", c.volume.intensity_min);
    c.volume.intensity_max = v.value("intensity_max", c.volume.intensity_max);
    c.volume.decay = v.value("decay", c.volume.decay);
    c.volume.noise_sd = v.value("noise_sd", c.volume.noise_sd);
  }
  validate(c);
  return c;
}

/// Either a synthetic generator or node/edge CSV files (plus an optional
/// sensor file fixing S_existing).
struct GraphSource {
  std::optional<SyntheticConfig> synthetic = SyntheticConfig{};
  bool vary_with_seed = true;  // synthetic only: new graph per run seed
  fs::path nodes_csv;
  fs::path edges_csv;
  fs::path sensors_csv;
};

struct ExperimentConfig {
  GraphSource graph;
  std::size_t base_sensors = 20;
  std::vector<std::size_t> budgets = {10, 20, 40};
  std::vector<StrategyKind> strategies = {StrategyKind::Random, StrategyKind::Betweenness, StrategyKind::Closeness,
                                          StrategyKind::ObservedActivity};
  std::vector<PolicyKind> rl_variants = {PolicyKind::Standard, PolicyKind::AdaptiveEpsilon, PolicyKind::Curiosity};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  ModelConfig model;
  AgentConfig agent;
  TabularConfig tabular;
  double activity_noise_sd = 20.0;
  double mape_floor = 1.0;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::size_t ablation_budget = 20;
  bool compare_models = false;
  fs::path out_dir = "runs/latest";
};

inline void validate(const ExperimentConfig& c) {
  if (!c.graph.synthetic && (c.graph.nodes_csv.empty() || c.graph.edges_csv.empty()))
    fail(ErrorCode::InvalidConfig, "graph needs either a synthetic block or nodes_csv and edges_csv");
  if (c.budgets.empty()) fail(ErrorCode::InvalidConfig, "budgets must not be empty");
  if (!std::is_sorted(c.budgets.begin(), c.budgets.end()) ||
      std::adjacent_find(c.budgets.begin(), c.budgets.end()) != c.budgets.end())
    fail(ErrorCode::InvalidConfig, "budgets must be strictly ascending");
  if (c.seeds.empty()) fail(ErrorCode::InvalidConfig, "seeds must not be empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    fail(ErrorCode::InvalidConfig, "seeds must be distinct");
  if (c.graph.sensors_csv.empty() && c.base_sensors == 0) fail(ErrorCode::InvalidConfig, "base_sensors must be >= 1");
  if (std::find(c.strategies.begin(), c.strategies.end(), StrategyKind::RLGreedy) != c.strategies.end())
    fail(ErrorCode::InvalidConfig, "list RL policies under rl_variants, not strategies");
  if (c.activity_noise_sd < 0.0) fail(ErrorCode::InvalidConfig, "activity_noise_sd must be >= 0");
  validate(c.model);
  validate(c.agent);
}

/// Everything that shapes results; the output directory is left out so a
/// rerun elsewhere produces the same payload.
inline json to_json(const ExperimentConfig& c) {
  json graph = {{"vary_with_seed", c.graph.vary_with_seed}};
  if (c.graph.synthetic) graph["synthetic"] = to_json(*c.graph.synthetic);
  if (!c.graph.nodes_csv.empty()) graph["nodes_csv"] = c.graph.nodes_csv.generic_string();
  if (!c.graph.edges_csv.empty()) graph["edges_csv"] = c.graph.edges_csv.generic_string();
  if (!c.graph.sensors_csv.empty()) graph["sensors_csv"] = c.graph.sensors_csv.generic_string();
  json strategies = json::array(), variants = json::array();
  for (auto s : c.strategies) strategies.push_back(to_string(s));
  for (auto v : c.rl_variants) variants.push_back(to_string(v));
  return {{"schema_version", kReportSchemaVersion},
          {"graph", graph},
          {"base_sensors", c.base_sensors},
          {"budgets", c.budgets},
          {"strategies", strategies},
          {"rl_variants", variants},
          {"seeds", c.seeds},
          {"model", to_json(c.model)},
          {"agent", to_json(c.agent)},
          {"tabular",
           {{"ridge", c.tabular.ridge},
            {"hidden", c.tabular.hidden},
            {"epochs", c.tabular.epochs},
            {"learning_rate", c.tabular.learning_rate}}},
          {"activity_noise_sd", c.activity_noise_sd},
          {"mape_floor", c.mape_floor},
          {"val_fraction", c.val_fraction},
          {"test_fraction", c.test_fraction},
          {"ablation_budget", c.ablation_budget},
          {"compare_models", c.compare_models}};
}

inline PolicyKind policy_from_string(std::string_view s) {
  for (auto k : {PolicyKind::Standard, PolicyKind::AdaptiveEpsilon, PolicyKind::Curiosity})
    if (to_string(k) == s) return k;
  fail(ErrorCode::InvalidConfig, "unknown RL variant '" + std::string(s) + "'");
}

/// Relative paths in the config resolve against `base_dir`.
inline ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir = {}) {
  try {
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != kReportSchemaVersion)
      fail(ErrorCode::InvalidConfig, "unsupported schema_version " + j.at("schema_version").dump());
    ExperimentConfig c;
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    if (j.contains("graph")) {
      const auto& g = j.at("graph");
      c.graph.vary_with_seed = g.value("vary_with_seed", c.graph.vary_with_seed);
      if (g.contains("nodes_csv")) {
        c.graph.synthetic.reset();
        c.graph.nodes_csv = resolve(g.at("nodes_csv").get<std::string>());
        c.graph.edges_csv = resolve(g.at("edges_csv").get<std::string>());
      }
      if (g.contains("sensors_csv")) c.graph.sensors_csv = resolve(g.at("sensors_csv").get<std::string>());
      if (g.contains("synthetic")) c.graph.synthetic = synthetic_config_from_json(g.at("synthetic"));
    }
    c.base_sensors = j.value("base_sensors", c.base_sensors);
    if (j.contains("budgets")) c.budgets = j.at("budgets").get<std::vector<std::size_t>>();
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j.at("strategies")) c.strategies.push_back(strategy_from_string(s.get<std::string>()));
    }
    if (j.contains("rl_variants")) {
      c.rl_variants.clear();
      for (const auto& s : j.at("rl_variants")) c.rl_variants.push_back(policy_from_string(s.get<std::string>()));
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("agent")) c.agent = agent_config_from_json(j.at("agent"));
    if (j.contains("tabular")) {
      const auto& t = j.at("tabular");
      c.tabular.ridge = t.value("ridge", c.tabular.ridge);
      c.tabular.hidden = t.value("hidden", c.tabular.hidden);
      c.tabular.epochs = t.value("epochs", c.tabular.epochs);
      c.tabular.learning_rate = t.value("learning_rate", c.tabular.learning_rate);
    }
    c.activity_noise_sd = j.value("activity_noise_sd", c.activity_noise_sd);
    c.mape_floor = j.value("mape_floor", c.mape_floor);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.ablation_budget = j.value("ablation_budget", c.ablation_budget);
    c.compare_models = j.value("compare_models", c.compare_models);
    if (j.contains("out_dir")) c.out_dir = resolve(j.at("out_dir").get<std::string>());
    validate(c);
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("malformed config: ") + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::MissingFile, path.string());
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Per-seed setup

/// Graph, sensors, splits and pretrained model for one run seed.
struct SeedContext {
  std::uint64_t seed = 0;
  NetworkGraph graph;
  std::shared_ptr<const GraphInputs> inputs;
  SensorPartition partition;
  SplitAssignment split;
  std::vector<double> activity;
  std::vector<NodeId> excluded;  // holdout nodes, off limits to every strategy
  ModelConfig model;
  HybridModelParams pretrained;
};

inline NetworkGraph build_graph(const ExperimentConfig& c, std::uint64_t seed) {
  if (!c.graph.synthetic) return load_graph(c.graph.nodes_csv, c.graph.edges_csv);
  SyntheticConfig s = *c.graph.synthetic;
  if (c.graph.vary_with_seed) s.seed = mix_seed(s.seed, seed);
  return generate_synthetic(s);
}

inline ModelConfig seeded(ModelConfig m, std::uint64_t seed) {
  m.seed = mix_seed(seed, 12);
  return m;
}

inline HybridModelParams fit_from_scratch(const ModelConfig& m, const SeedContext& ctx, const SensorPartition& p) {
  auto init = init_params(m, ctx.graph.feature_dim(), ctx.graph.edge_dim());
  return train(std::move(init), *ctx.inputs, with_train(ctx.split, p)).first;
}

inline SeedContext prepare_seed(const ExperimentConfig& c, std::uint64_t seed, std::optional<ModelConfig> model = {}) {
  SeedContext ctx;
  ctx.seed = seed;
  ctx.graph = build_graph(c, seed);
  ctx.inputs = std::make_shared<const GraphInputs>(GraphInputs::from(ctx.graph));
  ctx.partition = c.graph.sensors_csv.empty() ? make_partition_count(ctx.graph, c.base_sensors, mix_seed(seed, 10))
                                              : load_sensors(c.graph.sensors_csv, ctx.graph.num_nodes()).reset();
  ctx.split = make_splits(ctx.graph, ctx.partition, mix_seed(seed, 11), c.val_fraction, c.test_fraction);
  ctx.activity = proxy_activity(ctx.graph, c.activity_noise_sd, mix_seed(seed, 13));
  if (c.agent.exclude_holdout) ctx.excluded = ctx.split.holdout();
  ctx.model = seeded(model.value_or(c.model), seed);
  ctx.pretrained = fit_from_scratch(ctx.model, ctx, ctx.partition);
  return ctx;
}

struct RlPlacement {
  std::vector<NodeId> placed;
  std::vector<EpisodeResult> episodes;
};

inline RlPlacement rl_placement(const ExperimentConfig& c, const SeedContext& ctx, PolicyKind kind, std::size_t budget) {
  PlacementEnv env(ctx.inputs, ctx.partition, ctx.split, ctx.pretrained, budget, c.agent.finetune_epochs,
                   c.agent.exclude_holdout, c.agent.standardized_reward);
  const std::uint64_t agent_seed = mix_seed(ctx.seed, 100 + static_cast<std::uint64_t>(kind) * 1000 + budget);
  AgentRun run = train_agent(env, kind, c.agent, agent_seed);
  auto placed = final_placement(run.qnet, env, budget);
  return {std::move(placed), std::move(run.episodes)};
}

inline std::vector<NodeId> heuristic_placement(const ExperimentConfig&, const SeedContext& ctx, StrategyKind kind,
                                               std::size_t budget) {
  return select_by_strategy(ctx.graph, ctx.partition, {kind, mix_seed(ctx.seed, 14 + budget)}, budget, ctx.activity,
                            ctx.excluded);
}

// ---------------------------------------------------------------------------
// Results

struct CellResult {
  std::string strategy;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  std::vector<NodeId> placed;
  Metrics test;
  double val_mse = 0.0;

  bool operator==(const CellResult&) const = default;
};

inline json to_json(const CellResult& r) {
  return {{"strategy", r.strategy}, {"budget", r.budget}, {"seed", r.seed},
          {"placed", r.placed},     {"test", to_json(r.test)}, {"val_mse", r.val_mse}};
}

/// Retrains from scratch with S_new added and scores the fixed test set.
inline CellResult evaluate_placement(const ExperimentConfig& c, const SeedContext& ctx, const ModelConfig& model,
                                     std::string strategy, std::size_t budget, std::vector<NodeId> placed) {
  const auto after = ctx.partition.with_new_sensors(placed);
  const auto params = placed.empty() && model.seed == ctx.model.seed && model.use_gcn == ctx.model.use_gcn &&
                              model.use_gat == ctx.model.use_gat
                          ? ctx.pretrained
                          : fit_from_scratch(model, ctx, after);
  const auto pred = predict(params, *ctx.inputs);
  CellResult r;
  r.strategy = std::move(strategy);
  r.budget = budget;
  r.seed = ctx.seed;
  r.placed = std::move(placed);
  r.test = compute_metrics(ctx.inputs->volumes, pred, ctx.split.test, c.mape_floor);
  r.val_mse = mse_over(pred, ctx.inputs->volumes, ctx.split.val);
  return r;
}

struct CellSummary {
  std::string strategy;
  std::size_t budget = 0;
  Summary mse, rmse, mae, mape_pct;
};

inline json to_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

inline json to_json(const CellSummary& s) {
  return {{"strategy", s.strategy}, {"budget", s.budget},       {"mse", to_json(s.mse)},
          {"rmse", to_json(s.rmse)}, {"mae", to_json(s.mae)}, {"mape_pct", to_json(s.mape_pct)}};
}

/// Mean and sample std per (strategy, budget), in first-seen order.
inline std::vector<CellSummary> summarize_cells(const std::vector<CellResult>& cells) {
  std::vector<std::pair<std::string, std::size_t>> keys;
  std::map<std::pair<std::string, std::size_t>, std::vector<const CellResult*>> groups;
  for (const auto& c : cells) {
    auto key = std::make_pair(c.strategy, c.budget);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&c);
  }
  std::vector<CellSummary> out;
  for (const auto& key : keys) {
    std::vector<double> mse, rmse, mae, mape;
    for (const auto* c : groups[key]) {
      mse.push_back(c->test.mse);
      rmse.push_back(c->test.rmse);
      mae.push_back(c->test.mae);
      mape.push_back(c->test.mape_pct);
    }
    out.push_back({key.first, key.second, summarize(mse), summarize(rmse), summarize(mae), summarize(mape)});
  }
  return out;
}

inline const CellSummary* find_summary(const std::vector<CellSummary>& s, std::string_view strategy,
                                       std::size_t budget) {
  for (const auto& c : s)
    if (c.strategy == strategy && c.budget == budget) return &c;
  return nullptr;
}

struct ModelComparisonRow {
  std::string model;
  std::uint64_t seed = 0;
  Metrics test;
};

struct ComparisonReport {
  std::vector<CellResult> cells;
  std::vector<CellSummary> summary;
  std::vector<ModelComparisonRow> models;
  json agent_traces = json::array();
};

inline std::string rl_strategy_name(PolicyKind k) { return "rl_" + std::string(to_string(k)); }
inline constexpr std::string_view kOriginalStrategy = "original";

// ---------------------------------------------------------------------------
// Output

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

inline void write_plot_data(const fs::path& path, const std::vector<CellResult>& cells,
                            const std::string& strategy_column = "strategy") {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << strategy_column << ",budget,seed,metric,value\n";
  for (const auto& c : cells) {
    const std::pair<const char*, double> rows[] = {
        {"mse", c.test.mse}, {"rmse", c.test.rmse}, {"mae", c.test.mae}, {"mape_pct", c.test.mape_pct}};
    for (const auto& [metric, value] : rows)
      out << c.strategy << ',' << c.budget << ',' << c.seed << ',' << metric << ',' << csv::format_real(value) << '\n';
  }
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Runs `body`, then writes manifest.json whether or not it succeeded.
/// `body` receives the output directory and returns the files it wrote.
inline void with_manifest(const std::string& command, const ExperimentConfig& c,
                          const std::function<std::vector<std::string>(const fs::path&)>& body) {
  fs::create_directories(c.out_dir);
  const auto wall_start = std::chrono::system_clock::now();
  const auto mono_start = std::chrono::steady_clock::now();
  json manifest = {{"schema_version", kReportSchemaVersion},
                   {"command", command},
                   {"config_hash", config_hash(c)},
                   {"seeds", c.seeds},
                   {"version", kVersion},
                   {"started_at", utc_timestamp(wall_start)}};
  auto finish = [&](const std::string& status, const std::vector<std::string>& files) {
    manifest["status"] = status;
    manifest["files"] = files;
    manifest["finished_at"] = utc_timestamp(std::chrono::system_clock::now());
    manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - mono_start).count();
    write_json(c.out_dir / "manifest.json", manifest);
  };
  try {
    finish("complete", body(c.out_dir));
  } catch (const std::exception& e) {
    manifest["error"] = e.what();
    std::vector<std::string> present;
    for (const char* f : {"report.json", "plot_data.csv"})
      if (fs::exists(c.out_dir / f)) present.emplace_back(f);
    finish("partial", present);
    throw;
  }
}

// ---------------------------------------------------------------------------
// Comparison

inline json report_payload(const ExperimentConfig& c, const ComparisonReport& r, const std::string& status) {
  json cells = json::array(), summary = json::array(), models = json::array();
  for (const auto& cell : r.cells) cells.push_back(to_json(cell));
  for (const auto& s : r.summary) summary.push_back(to_json(s));
  for (const auto& m : r.models) models.push_back({{"model", m.model}, {"seed", m.seed}, {"test", to_json(m.test)}});
  json out = {{"schema_version", kReportSchemaVersion},
              {"kind", "comparison"},
              {"status", status},
              {"config", to_json(c)},
              {"cells", cells},
              {"summary", summary}};
  if (c.compare_models) out["models"] = models;
  return out;
}

/// For every seed: pretrain on S_existing, then for each budget and each
/// strategy obtain S_new, retrain from scratch and score the test set.
/// With `write` the report files land in config.out_dir.
inline ComparisonReport run_comparison(const ExperimentConfig& c, bool write = true,
                                       const std::function<void(const std::string&)>& log = {}) {
  validate(c);
  ComparisonReport report;
  auto flush = [&](const std::string& status) {
    report.summary = summarize_cells(report.cells);
    if (!write) return;
    write_json(c.out_dir / "report.json", report_payload(c, report, status));
    write_plot_data(c.out_dir / "plot_data.csv", report.cells);
    write_json(c.out_dir / "agent_traces.json", report.agent_traces);
  };
  auto body = [&](const fs::path&) -> std::vector<std::string> {
    try {
      for (std::uint64_t seed : c.seeds) {
        if (log) log("seed " + std::to_string(seed) + ": pretraining");
        const SeedContext ctx = prepare_seed(c, seed);
        report.cells.push_back(evaluate_placement(c, ctx, ctx.model, std::string(kOriginalStrategy), 0, {}));
        if (c.compare_models) {
          const auto train_nodes = ctx.partition.train();
          std::vector<std::vector<double>> x_train, x_all;
          std::vector<double> y_train;
          for (const auto& n : ctx.graph.nodes()) x_all.push_back(n.features);
          for (NodeId i : train_nodes) {
            x_train.push_back(ctx.graph.nodes()[i].features);
            y_train.push_back(ctx.inputs->volumes[i]);
          }
          report.models.push_back({"hybrid_gnn", seed, report.cells.back().test});
          for (auto kind : {TabularKind::Linear, TabularKind::MLP}) {
            TabularConfig tc = c.tabular;
            tc.seed = mix_seed(seed, 15);
            const auto m = train_tabular(kind, x_train, y_train, tc);
            report.models.push_back(
                {std::string(to_string(kind)), seed,
                 compute_metrics(ctx.inputs->volumes, m.predict(x_all), ctx.split.test, c.mape_floor)});
          }
        }
        for (std::size_t budget : c.budgets) {
          for (StrategyKind s : c.strategies)
            report.cells.push_back(evaluate_placement(c, ctx, ctx.model, std::string(to_string(s)), budget,
                                                      heuristic_placement(c, ctx, s, budget)));
          for (PolicyKind v : c.rl_variants) {
            if (log) log("seed " + std::to_string(seed) + ": " + rl_strategy_name(v) + " budget " + std::to_string(budget));
            auto rl = rl_placement(c, ctx, v, budget);
            json eps = json::array();
            for (const auto& e : rl.episodes) eps.push_back(to_json(e));
            report.agent_traces.push_back(
                {{"seed", seed}, {"budget", budget}, {"variant", to_string(v)}, {"placed", rl.placed}, {"episodes", eps}});
            report.cells.push_back(
                evaluate_placement(c, ctx, ctx.model, rl_strategy_name(v), budget, std::move(rl.placed)));
          }
        }
      }
    } catch (...) {
      flush("partial");
      throw;
    }
    flush("complete");
    return {"report.json", "plot_data.csv", "agent_traces.json"};
  };
  if (write)
    with_manifest("compare", c, body);
  else
    body({});
  return report;
}

// ---------------------------------------------------------------------------
// Ablation

inline constexpr std::array<std::string_view, 4> kAblationArms = {"full", "no-rl", "gcn-only", "gat-only"};

struct AblationReport {
  std::size_t budget = 0;
  std::vector<CellResult> cells;  // strategy field holds the arm name
  std::vector<CellSummary> summary;
};

inline json report_payload(const ExperimentConfig& c, const AblationReport& r, const std::string& status) {
  json cells = json::array(), arms = json::array();
  for (const auto& cell : r.cells) cells.push_back(to_json(cell));
  for (const auto& s : r.summary) {
    json j = to_json(s);
    j["arm"] = j["strategy"];
    j.erase("strategy");
    arms.push_back(j);
  }
  return {{"schema_version", kReportSchemaVersion},
          {"kind", "ablation"},
          {"status", status},
          {"config", to_json(c)},
          {"budget", r.budget},
          {"arm_order", kAblationArms},
          {"arms", arms},
          {"cells", cells}};
}

/// Four arms at config.ablation_budget: hybrid + curiosity RL, hybrid +
/// random placement, GCN-only + RL, GAT-only + RL.
inline AblationReport run_ablation(const ExperimentConfig& c, bool write = true,
                                   const std::function<void(const std::string&)>& log = {}) {
  validate(c);
  AblationReport report;
  report.budget = c.ablation_budget;
  auto flush = [&](const std::string& status) {
    std::vector<CellResult> ordered;
    for (auto arm : kAblationArms)
      for (const auto& cell : report.cells)
        if (cell.strategy == arm) ordered.push_back(cell);
    report.summary = summarize_cells(ordered);
    if (!write) return;
    write_json(c.out_dir / "report.json", report_payload(c, report, status));
    write_plot_data(c.out_dir / "plot_data.csv", report.cells, "arm");
  };
  auto body = [&](const fs::path&) -> std::vector<std::string> {
    try {
      for (std::uint64_t seed : c.seeds) {
        const std::size_t k = c.ablation_budget;
        for (auto arm : kAblationArms) {
          if (log) log("seed " + std::to_string(seed) + ": arm " + std::string(arm));
          ModelConfig m = c.model;
          if (arm == "gcn-only") m.use_gat = false;
          if (arm == "gat-only") m.use_gcn = false;
          const SeedContext ctx = prepare_seed(c, seed, m);
          std::vector<NodeId> placed = arm == "no-rl" ? heuristic_placement(c, ctx, StrategyKind::Random, k)
                                                      : rl_placement(c, ctx, PolicyKind::Curiosity, k).placed;
          report.cells.push_back(evaluate_placement(c, ctx, ctx.model, std::string(arm), k, std::move(placed)));
        }
      }
    } catch (...) {
      flush("partial");
      throw;
    }
    flush("complete");
    return {"report.json", "plot_data.csv"};
  };
  if (write)
    with_manifest("ablate", c, body);
  else
    body({});
  return report;
}

// ---------------------------------------------------------------------------
// Coverage

struct CoverageRow {
  RoadClass road_class = RoadClass::Other;
  std::size_t segments = 0;
  std::size_t before = 0;
  std::vector<std::size_t> after;  // one per budget
};

struct CoverageReport {
  std::vector<std::size_t> budgets;
  std::vector<CoverageRow> rows;  // one per road class, enum order

  std::size_t total_before() const {
    std::size_t s = 0;
    for (const auto& r : rows) s += r.before;
    return s;
  }
  std::size_t total_after(std::size_t b) const {
    std::size_t s = 0;
    for (const auto& r : rows) s += r.after.at(b);
    return s;
  }
};

/// Sensors per road class before and after each budget's placement.
inline CoverageReport coverage_report(const NetworkGraph& g, const SensorPartition& before,
                                      const std::vector<SensorPartition>& after, const std::vector<std::size_t>& budgets) {
  if (after.size() != budgets.size()) fail(ErrorCode::LengthMismatch, "one partition per budget required");
  if (before.num_nodes() != g.num_nodes()) fail(ErrorCode::GraphMismatch, "partition size differs from graph");
  for (std::size_t b = 0; b < after.size(); ++b) {
    if (after[b].num_nodes() != g.num_nodes()) fail(ErrorCode::GraphMismatch, "partition size differs from graph");
    if (after[b].existing() != before.existing())
      fail(ErrorCode::GraphMismatch, "partitions disagree on the existing sensors");
  }
  CoverageReport r;
  r.budgets = budgets;
  r.rows.resize(kNumRoadClasses);
  for (std::size_t k = 0; k < kNumRoadClasses; ++k) {
    r.rows[k].road_class = static_cast<RoadClass>(k);
    r.rows[k].after.assign(budgets.size(), 0);
  }
  auto cls = [&](NodeId i) { return static_cast<std::size_t>(g.nodes()[i].road_class); };
  for (const auto& n : g.nodes()) ++r.rows[static_cast<std::size_t>(n.road_class)].segments;
  for (NodeId i : before.train()) ++r.rows[cls(i)].before;
  for (std::size_t b = 0; b < after.size(); ++b)
    for (NodeId i : after[b].train()) ++r.rows[cls(i)].after[b];
  return r;
}

inline json to_json(const CoverageReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json after = json::object();
    for (std::size_t b = 0; b < r.budgets.size(); ++b) after[std::to_string(r.budgets[b])] = row.after[b];
    rows.push_back({{"road_class", to_string(row.road_class)},
                    {"segments", row.segments},
                    {"before", row.before},
                    {"after", after}});
  }
  return {{"schema_version", kReportSchemaVersion}, {"kind", "coverage"}, {"budgets", r.budgets}, {"rows", rows}};
}

inline void save_coverage_csv(const fs::path& path, const CoverageReport& r) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "road_class,segments,before";
  for (auto b : r.budgets) out << ",after_" << b;
  out << '\n';
  for (const auto& row : r.rows) {
    out << to_string(row.road_class) << ',' << row.segments << ',' << row.before;
    for (auto a : row.after) out << ',' << a;
    out << '\n';
  }
}

}  // namespace roadsense
