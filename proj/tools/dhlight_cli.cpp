// dhlight: run, sweep, plot and validate traffic-signal experiments.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "dhlight/data/cityflow.hpp"
#include "dhlight/error.hpp"
#include "dhlight/harness/experiment.hpp"

namespace {

using namespace dhlight;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    harness::ExperimentConfig probe;
    harness::set_config_value(probe, "fixed.cycle", item);  // reuses the strict number parser
    out.push_back(probe.fixed_cycle);
  }
  if (out.empty()) throw ConfigError("--values must list at least one number");
  return out;
}

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::string& controller, const std::string& out) {
  harness::ExperimentConfig cfg = harness::load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!controller.empty()) cfg.controller = controller;
  if (!out.empty()) cfg.out_dir = out;
  const auto result = harness::run_experiment(cfg);
  const auto& rows = result.table.rows();
  const std::string id = rows.front().run_id;
  std::printf("%s: %zu episode(s), final ATT %.2f s, mean ATT over last 10 %.2f s, throughput %zu\n", id.c_str(),
              rows.size(), rows.back().att_secs, result.table.tail_mean_att(id, 10), rows.back().throughput);
  std::printf("wrote %s\n", (result.out_dir / "results.csv").string().c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param, const std::string& values,
              const std::string& out) {
  harness::ExperimentConfig cfg = harness::load_config(config_path);
  if (!out.empty()) cfg.out_dir = out;
  std::string p = param.empty() ? cfg.sweep_param : param;
  std::vector<double> v = values.empty() ? cfg.sweep_values : parse_values(values);
  if (p.empty()) throw ConfigError("no sweep parameter given");
  if (v.empty()) {
    if (p == "beta" || p == "hp.beta") v = {0.1, 0.3, 0.5, 0.7};
    else if (p == "zeta" || p == "hp.zeta") v = {0.0, 0.1, 0.3, 0.5};
    else throw ConfigError("no sweep values given");
  }
  const auto result = harness::run_sweep(cfg, p, v);
  for (const auto& s : result.summary) {
    std::printf("%s=%s ATT(last 10)=%.2f\n", result.param.c_str(), s.label.c_str(), s.att_secs);
  }
  return 0;
}

int cmd_plot(const std::string& results, const std::string& out) {
  const auto table = harness::ResultsTable::read(results);
  for (const auto& path : harness::emit_plots(table, out)) std::printf("wrote %s\n", path.string().c_str());
  return 0;
}

int cmd_validate(const std::string& roadnet, const std::string& flow) {
  const sim::RoadNetwork net = data::load_roadnet(roadnet);
  const data::FlowSpec spec = data::load_flow(flow, net);
  std::printf("ok: %zu intersections, %zu roads, %zu vehicles\n", net.intersection_count(), net.road_count(),
              spec.total());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Directed-hypergraph traffic signal control experiments"};
  app.require_subcommand(1);

  std::string config, controller, out, param, values, results, roadnet, flow;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config, "Experiment config file")->required();
  run->add_option("--seed", seed, "Override the seed");
  run->add_option("--controller", controller, "fixed | maxpressure | dhlight");
  run->add_option("--out", out, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Sweep one hyperparameter");
  sweep->add_option("--config", config, "Experiment config file")->required();
  sweep->add_option("--param", param, "Parameter name, e.g. beta or zeta");
  sweep->add_option("--values", values, "Comma-separated values");
  sweep->add_option("--out", out, "Output directory");

  auto* plot = app.add_subcommand("plot", "Render SVG plots from a results file");
  plot->add_option("--results", results, "results.csv")->required();
  plot->add_option("--out", out, "Output directory")->required();

  auto* validate = app.add_subcommand("validate", "Check a roadnet/flow pair");
  validate->add_option("--roadnet", roadnet, "Roadnet JSON")->required();
  validate->add_option("--flow", flow, "Flow JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, seed, controller, out);
    if (*sweep) return cmd_sweep(config, param, values, out);
    if (*plot) return cmd_plot(results, out);
    if (*validate) return cmd_validate(roadnet, flow);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
