#include "dhlight/harness/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <optional>
#include <thread>

#include "dhlight/data/cityflow.hpp"
#include "dhlight/data/flow.hpp"
#include "dhlight/error.hpp"
#include "dhlight/harness/controllers.hpp"
#include "dhlight/rl/trainer.hpp"

namespace dhlight::harness {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sweep_key(const std::string& param) { return param.rfind("hp.", 0) == 0 ? param : "hp." + param; }

}  // namespace

Scenario build_scenario(const ExperimentConfig& cfg) {
  Scenario s;
  if (cfg.dataset == "synth4x4") {
    s.network = sim::build_grid(4, 4, {});
    s.trips = data::bind_flow(data::gen_gaussian_flow(cfg.demand_seed(), s.network), s.network);
  } else if (cfg.dataset == "synth6x6") {
    s.network = sim::build_grid(6, 6, {});
    s.trips = data::bind_flow(data::gen_uniform_flow(cfg.demand_seed(), s.network), s.network);
  } else {
    fs::path roadnet = cfg.roadnet_path;
    fs::path flow = cfg.flow_path;
    if (cfg.dataset != "files") {
      roadnet = fs::path(cfg.data_dir) / cfg.dataset / "roadnet.json";
      flow = fs::path(cfg.data_dir) / cfg.dataset / "flow.json";
    }
    s.network = data::load_roadnet(roadnet);
    s.trips = data::bind_flow(data::load_flow(flow, s.network), s.network);
  }
  return s;
}

ResultRow run_baseline(const ExperimentConfig& cfg, const Scenario& scenario, const std::string& run_id,
                       std::ostream* replay) {
  sim::SimConfig sc;
  sc.delta_t = cfg.delta_t;
  sim::Simulator sim(scenario.network, scenario.trips, sc);
  const std::size_t n = sim.agent_count();
  std::vector<int> phases(n, 1);
  std::optional<FixedTimeController> fixed;
  if (cfg.controller == "fixed") {
    fixed.emplace(cfg.fixed_cycle, cfg.fixed_splits, cfg.delta_t);
  } else if (cfg.controller != "maxpressure") {
    throw ConfigError("'" + cfg.controller + "' is not a classical controller");
  }
  std::optional<sim::ReplayLog> log;
  if (replay) log.emplace(*replay);

  const auto t0 = std::chrono::steady_clock::now();
  double reward_sum = 0.0;
  std::size_t decisions = 0;
  while (sim.time() < cfg.horizon - 1e-9) {
    for (std::size_t i = 0; i < n; ++i) {
      phases[i] = fixed ? fixed->phase_at(sim.time()) : max_pressure_controller(sim, i);
    }
    sim.step(phases, std::min(cfg.delta_t, cfg.horizon - sim.time()));
    for (std::size_t i = 0; i < n; ++i) reward_sum += sim.reward(i);
    ++decisions;
    if (log) log->record(sim);
  }
  ResultRow row;
  row.run_id = run_id;
  row.episode = 0;
  row.controller = cfg.controller;
  row.seed = cfg.seed;
  row.att_secs = sim.average_travel_time();
  row.throughput = sim.metrics().throughput();
  row.mean_reward = reward_sum / static_cast<double>(std::max<std::size_t>(1, decisions * n));
  row.wall_secs = cfg.record_wall_clock ? seconds_since(t0) : 0.0;
  return row;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& run_id_in) {
  cfg.validate();
  const std::string run_id =
      run_id_in.empty() ? cfg.controller + "-seed" + std::to_string(cfg.seed) : run_id_in;
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  write_text(out_dir / "config_resolved.toml", emit_config(cfg));

  Scenario scenario = build_scenario(cfg);
  ExperimentResult result;
  result.out_dir = out_dir;
  std::string timings = "run_id,episode,wall_secs\n";

  if (cfg.controller == "dhlight") {
    sim::SimConfig sc;
    sc.delta_t = cfg.delta_t;
    sim::Simulator sim(scenario.network, scenario.trips, sc);
    std::ofstream dump;
    rl::TrainerOptions opts;
    opts.episode_seconds = cfg.horizon;
    if (cfg.dump_hyperedges) {
      dump.open(out_dir / "hyperedges.csv", std::ios::binary);
      if (!dump) throw DataError("cannot write hyperedge dump");
      dhg::write_hyperedge_dump_header(dump);
      opts.hyperedge_dump = &dump;
    }
    rl::Trainer trainer(sim, cfg.hp, cfg.seed, opts);
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t e = 0; e < cfg.hp.episodes; ++e) {
      const rl::EpisodeMetrics m = trainer.run_episode();
      const double wall = seconds_since(t0);
      t0 = std::chrono::steady_clock::now();
      ResultRow row;
      row.run_id = run_id;
      row.episode = m.episode;
      row.controller = cfg.controller;
      row.seed = cfg.seed;
      row.att_secs = m.att_secs;
      row.throughput = m.throughput;
      row.mean_reward = m.mean_reward;
      row.l_recon = m.l_recon;
      row.l_clip = m.l_clip;
      row.wall_secs = cfg.record_wall_clock ? wall : 0.0;
      result.table.append(row);
      timings += run_id + "," + std::to_string(m.episode) + "," + format_double(wall) + "\n";
      if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0) {
        rl::save_checkpoint((out_dir / ("checkpoint_ep" + std::to_string(e + 1) + ".bin")).string(), trainer.store());
      }
    }
    rl::save_checkpoint((out_dir / "checkpoint.bin").string(), trainer.store());
  } else {
    std::ofstream replay;
    if (cfg.replay_log) {
      replay.open(out_dir / "replay.csv", std::ios::binary);
      if (!replay) throw DataError("cannot write replay log");
    }
    const auto t0 = std::chrono::steady_clock::now();
    result.table.append(run_baseline(cfg, scenario, run_id, cfg.replay_log ? &replay : nullptr));
    timings += run_id + ",0," + format_double(seconds_since(t0)) + "\n";
  }

  result.table.write(out_dir / "results.csv");
  write_text(out_dir / "timings.csv", timings);
  emit_plots(result.table, out_dir);
  return result;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const std::string key = sweep_key(param);
  const std::string short_name = key.substr(3);

  std::vector<ExperimentConfig> configs;
  std::vector<std::string> labels;
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError("sweep values must be finite");
    ExperimentConfig sub = cfg;
    sub.sweep_param.clear();
    sub.sweep_values.clear();
    set_config_value(sub, key, format_double(v));
    labels.push_back(short_name + "=" + format_double(v));
    sub.out_dir = (fs::path(cfg.out_dir) / (short_name + "_" + format_double(v))).string();
    sub.validate();
    configs.push_back(std::move(sub));
  }

  std::vector<ResultsTable> tables(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  std::size_t workers = cfg.sweep_threads;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, configs.size());
  auto work = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        tables[i] = run_experiment(configs[i], labels[i]).table;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  SweepResult result;
  result.param = short_name;
  result.values = values;
  std::string summary = "param,value,att_tail_mean,throughput_last\n";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    result.combined.append(tables[i]);
    const double att = tables[i].tail_mean_att(labels[i], 10);
    result.summary.push_back({format_double(values[i]), att});
    summary += short_name + "," + format_double(values[i]) + "," + format_double(att) + "," +
               std::to_string(tables[i].rows().back().throughput) + "\n";
  }
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "summary.csv", summary);
  write_text(fs::path(cfg.out_dir) / ("sweep_" + short_name + ".svg"), sweep_bar_svg(short_name, result.summary));
  result.combined.write(fs::path(cfg.out_dir) / "results.csv");
  emit_plots(result.combined, cfg.out_dir);
  return result;
}

}  // namespace dhlight::harness
