#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dhlight/harness/config.hpp"
#include "dhlight/harness/plots.hpp"
#include "dhlight/harness/results.hpp"
#include "dhlight/sim/simulator.hpp"

namespace dhlight::harness {

struct Scenario {
  sim::RoadNetwork network;
  std::vector<sim::Trip> trips;
};

// Network and demand for the configured dataset.
Scenario build_scenario(const ExperimentConfig& cfg);

// One episode of a classical controller ("fixed" or "maxpressure").
ResultRow run_baseline(const ExperimentConfig& cfg, const Scenario& scenario, const std::string& run_id,
                       std::ostream* replay = nullptr);

struct ExperimentResult {
  ResultsTable table;
  std::filesystem::path out_dir;
};

// Runs the configured controller and writes results.csv, config_resolved.toml,
// att_curve.svg and (for dhlight) checkpoint.bin into cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& run_id = "");

struct SweepResult {
  std::string param;
  std::vector<double> values;
  std::vector<SweepPoint> summary;  // mean ATT over the last 10 episodes per value
  ResultsTable combined;
};

// One sub-run per value under <out_dir>/<param>_<value>, executed on worker
// threads; writes summary.csv and sweep_<param>.svg into cfg.out_dir.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<double>& values);

}  // namespace dhlight::harness
