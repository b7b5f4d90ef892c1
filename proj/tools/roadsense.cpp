// roadsense: command-line front end for the experiment harness.
//
//   roadsense generate --config exp.json --out data/
//   roadsense compare  --config data/experiment.json --seed 1 --out runs/cmp
//   roadsense report   --in runs/cmp/report.json

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roadsense/agent.hpp"
#include "roadsense/baselines.hpp"
#include "roadsense/graph_io.hpp"
#include "roadsense/harness.hpp"

namespace rs = roadsense;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_budget) {
  cmd->add_option("-c,--config", o.config, "Experiment config (JSON)");
  cmd->add_option("-s,--seed", o.seed, "Run a single seed");
  if (with_budget) cmd->add_option("-b,--budget", o.budget, "Run a single budget");
  cmd->add_option("-o,--out", o.out, "Output directory");
}

rs::ExperimentConfig resolve_config(const CommonOptions& o) {
  rs::ExperimentConfig c = o.config.empty() ? rs::ExperimentConfig{} : rs::load_experiment_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (o.budget) {
    c.budgets = {*o.budget};
    c.ablation_budget = *o.budget;
  }
  if (!o.out.empty()) c.out_dir = o.out;
  rs::validate(c);
  return c;
}

void progress(const std::string& msg) { std::cerr << "[roadsense] " << msg << '\n'; }

int cmd_generate(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const std::uint64_t seed = c.seeds.front();
  rs::with_manifest("generate", c, [&](const fs::path& dir) -> std::vector<std::string> {
    const auto g = rs::build_graph(c, seed);
    const auto p = c.graph.sensors_csv.empty() ? rs::make_partition_count(g, c.base_sensors, rs::mix_seed(seed, 10))
                                               : rs::load_sensors(c.graph.sensors_csv, g.num_nodes());
    rs::save_graph(g, dir / "nodes.csv", dir / "edges.csv");
    rs::save_sensors(p, dir / "sensors.csv");
    json exp = rs::to_json(c);
    exp["graph"] = {{"nodes_csv", "nodes.csv"}, {"edges_csv", "edges.csv"}, {"sensors_csv", "sensors.csv"}};
    rs::write_json(dir / "experiment.json", exp);
    progress("wrote " + std::to_string(g.num_nodes()) + " nodes, " + std::to_string(g.num_edges()) + " edges, " +
             std::to_string(p.existing().size()) + " sensors to " + dir.string());
    return {"nodes.csv", "edges.csv", "sensors.csv", "experiment.json"};
  });
  return 0;
}

int cmd_train(const CommonOptions& o) {
  const auto c = resolve_config(o);
  rs::with_manifest("train", c, [&](const fs::path& dir) -> std::vector<std::string> {
    const auto seed = c.seeds.front();
    const auto g = rs::build_graph(c, seed);
    const auto p = c.graph.sensors_csv.empty() ? rs::make_partition_count(g, c.base_sensors, rs::mix_seed(seed, 10))
                                               : rs::load_sensors(c.graph.sensors_csv, g.num_nodes()).reset();
    const auto split = rs::make_splits(g, p, rs::mix_seed(seed, 11), c.val_fraction, c.test_fraction);
    auto [model, report] = rs::train(rs::init_params(rs::seeded(c.model, seed), g), g, split);
    const auto pred = rs::predict(model, g);
    rs::save_model(dir / "model.json", model);
    json out = rs::to_json(report);
    out.erase("wall_seconds");
    out["test"] = rs::to_json(rs::compute_metrics(g.volumes(), pred, split.test, c.mape_floor));
    rs::write_json(dir / "train_report.json", out);
    progress("best val MSE " + std::to_string(report.best_val_mse) + " at epoch " + std::to_string(report.best_epoch));
    return {"model.json", "train_report.json"};
  });
  return 0;
}

int cmd_place(const CommonOptions& o, const std::string& strategy) {
  const auto c = resolve_config(o);
  rs::with_manifest("place", c, [&](const fs::path& dir) -> std::vector<std::string> {
    const auto ctx = rs::prepare_seed(c, c.seeds.front());
    const std::size_t k = c.budgets.back();
    json out = {{"schema_version", rs::kReportSchemaVersion}, {"strategy", strategy}, {"budget", k}};
    std::vector<rs::NodeId> placed;
    if (strategy.rfind("rl_", 0) == 0) {
      auto rl = rs::rl_placement(c, ctx, rs::policy_from_string(strategy.substr(3)), k);
      json eps = json::array();
      for (const auto& e : rl.episodes) eps.push_back(rs::to_json(e));
      out["episodes"] = eps;
      placed = std::move(rl.placed);
    } else {
      placed = rs::heuristic_placement(c, ctx, rs::strategy_from_string(strategy), k);
    }
    out["placed"] = placed;
    rs::save_sensors(ctx.partition.with_new_sensors(placed), dir / "sensors_after.csv");
    rs::write_json(dir / "placement.json", out);
    progress(strategy + " placed " + std::to_string(placed.size()) + " sensors");
    return {"sensors_after.csv", "placement.json"};
  });
  return 0;
}

int cmd_compare(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const auto r = rs::run_comparison(c, true, progress);
  progress("wrote " + std::to_string(r.cells.size()) + " cells to " + c.out_dir.string());
  return 0;
}

int cmd_ablate(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const auto r = rs::run_ablation(c, true, progress);
  progress("wrote " + std::to_string(r.cells.size()) + " cells to " + c.out_dir.string());
  return 0;
}

int cmd_coverage(const CommonOptions& o, const std::string& nodes, const std::string& edges,
                 const std::string& before, const std::vector<std::string>& after) {
  auto c = resolve_config(o);
  if (!nodes.empty()) {
    c.graph.synthetic.reset();
    c.graph.nodes_csv = nodes;
    c.graph.edges_csv = edges;
  }
  rs::with_manifest("coverage", c, [&](const fs::path& dir) -> std::vector<std::string> {
    const auto g = rs::build_graph(c, c.seeds.front());
    const auto p0 = rs::load_sensors(before, g.num_nodes());
    std::vector<rs::SensorPartition> parts;
    std::vector<std::size_t> budgets;
    for (const auto& path : after) {
      parts.push_back(rs::load_sensors(path, g.num_nodes()));
      budgets.push_back(parts.back().added().size() - p0.added().size());
    }
    const auto report = rs::coverage_report(g, p0, parts, budgets);
    rs::save_coverage_csv(dir / "coverage.csv", report);
    rs::write_json(dir / "coverage.json", rs::to_json(report));
    std::cout << std::left << std::setw(34) << "road_class" << std::setw(10) << "segments" << std::setw(8) << "before";
    for (auto b : budgets) std::cout << std::setw(10) << ("+" + std::to_string(b));
    std::cout << '\n';
    for (const auto& row : report.rows) {
      std::cout << std::setw(34) << rs::to_string(row.road_class) << std::setw(10) << row.segments << std::setw(8)
                << row.before;
      for (auto a : row.after) std::cout << std::setw(10) << a;
      std::cout << '\n';
    }
    return {"coverage.csv", "coverage.json"};
  });
  return 0;
}

int cmd_report(const std::string& in) {
  if (!fs::exists(in)) rs::fail(rs::ErrorCode::MissingFile, in);
  std::ifstream f(in);
  json r;
  try {
    r = json::parse(f);
  } catch (const json::parse_error& e) {
    rs::fail(rs::ErrorCode::ParseError, in + ": " + e.what());
  }
  const bool ablation = r.value("kind", "") == "ablation";
  const auto& rows = ablation ? r.at("arms") : r.at("summary");
  std::cout << std::left << std::setw(22) << (ablation ? "arm" : "strategy") << std::right << std::setw(7) << "budget"
            << std::setw(14) << "mse" << std::setw(12) << "± sd" << std::setw(10) << "rmse" << std::setw(10) << "mae"
            << std::setw(10) << "mape%" << std::setw(5) << "n" << '\n';
  std::cout << std::fixed << std::setprecision(2);
  for (const auto& s : rows) {
    std::cout << std::left << std::setw(22) << s.at(ablation ? "arm" : "strategy").get<std::string>() << std::right
              << std::setw(7) << (ablation ? r.at("budget") : s.at("budget")).get<std::size_t>() << std::setw(14)
              << s["mse"]["mean"].get<double>() << std::setw(12) << s["mse"]["std"].get<double>() << std::setw(10)
              << s["rmse"]["mean"].get<double>() << std::setw(10) << s["mae"]["mean"].get<double>() << std::setw(10)
              << s["mape_pct"]["mean"].get<double>() << std::setw(5) << s["mse"]["n"].get<std::size_t>() << '\n';
  }
  if (r.contains("models")) {
    std::cout << "\nmodel comparison (original sensors)\n";
    std::map<std::string, std::vector<double>> mse;
    std::vector<std::string> order;
    for (const auto& m : r.at("models")) {
      const auto name = m.at("model").get<std::string>();
      if (!mse.count(name)) order.push_back(name);
      mse[name].push_back(m["test"]["mse"].get<double>());
    }
    for (const auto& name : order) {
      const auto s = rs::summarize(mse[name]);
      std::cout << std::left << std::setw(22) << name << std::right << std::setw(14) << s.mean << std::setw(12) << s.std
                << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensor placement experiments on road-network graphs", "roadsense"};
  app.set_version_flag("--version", std::string(rs::kVersion));
  app.require_subcommand(1);

  CommonOptions common;
  std::string strategy = "rl_curiosity", report_in, nodes, edges, before;
  std::vector<std::string> after;

  auto* generate = app.add_subcommand("generate", "Write a synthetic graph and base sensors as CSV");
  add_common(generate, common, false);
  auto* train = app.add_subcommand("train", "Train the hybrid model on the base sensors");
  add_common(train, common, false);
  auto* place = app.add_subcommand("place", "Choose new sensor locations");
  add_common(place, common, true);
  place->add_option("--strategy", strategy,
                    "random|betweenness|closeness|observed_activity|rl_standard|rl_adaptive_epsilon|rl_curiosity");
  auto* compare = app.add_subcommand("compare", "Compare placement strategies over budgets and seeds");
  add_common(compare, common, true);
  auto* ablate = app.add_subcommand("ablate", "Run the four ablation arms");
  add_common(ablate, common, true);
  auto* coverage = app.add_subcommand("coverage", "Sensors per road class before and after placement");
  add_common(coverage, common, false);
  coverage->add_option("--nodes", nodes, "Node CSV (instead of the config's graph)");
  coverage->add_option("--edges", edges, "Edge CSV");
  coverage->add_option("--before", before, "Sensor CSV before placement")->required();
  coverage->add_option("--after", after, "Sensor CSV after placement (repeatable)");
  auto* report = app.add_subcommand("report", "Print the summary table of a report.json");
  report->add_option("-i,--in", report_in, "report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*generate) return cmd_generate(common);
    if (*train) return cmd_train(common);
    if (*place) return cmd_place(common, strategy);
    if (*compare) return cmd_compare(common);
    if (*ablate) return cmd_ablate(common);
    if (*coverage) {
      if (nodes.empty() != edges.empty()) rs::fail(rs::ErrorCode::InvalidConfig, "--nodes and --edges go together");
      return cmd_coverage(common, nodes, edges, before, after);
    }
    if (*report) return cmd_report(report_in);
    rs::fail(rs::ErrorCode::UnknownSubcommand, "no subcommand");
  } catch (const rs::Error& e) {
    std::cerr << "error [" << rs::to_string(e.code()) << "]: " << e.what() << '\n';
    return rs::is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
