#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dhlight/rl/ppo.hpp"

namespace dhlight::harness {

// Experiment description read from a TOML-style key = value file.
//
//   dataset = "synth4x4"        # synth4x4 | synth6x6 | hangzhou | jinan | files
//   controller = "dhlight"      # fixed | maxpressure | dhlight
//   seed = 0
//   [hp]
//   beta = 0.3
//
// Section headers prefix the keys that follow ("[hp]" + "beta" -> "hp.beta").
struct ExperimentConfig {
  std::string dataset = "synth4x4";
  std::string data_dir = "data";      // hangzhou/jinan: <data_dir>/<name>/{roadnet,flow}.json
  std::string roadnet_path;           // dataset = files
  std::string flow_path;
  std::string controller = "dhlight";
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> flow_seed;  // synthetic demand seed; defaults to seed
  double delta_t = 10.0;
  double horizon = 3600.0;
  std::string out_dir = "out";
  rl::Hyperparameters hp;
  double fixed_cycle = 120.0;
  std::vector<double> fixed_splits{30.0, 30.0, 30.0, 30.0};
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::size_t sweep_threads = 0;      // 0: one per hardware thread
  bool record_wall_clock = false;     // write real timings into results.csv
  std::size_t checkpoint_every = 0;   // 0: final checkpoint only
  bool dump_hyperedges = false;
  bool replay_log = false;

  // Throws ConfigError for inconsistent settings and DataError for missing
  // input files.
  void validate() const;
  std::uint64_t demand_seed() const { return flow_seed.value_or(seed); }
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Assigns one key from its textual value (as it would appear in a file).
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
// Every key with its resolved value; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& cfg);

// Keys accepted by sweeps (numeric hyperparameters).
std::vector<std::string> sweepable_keys();

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace dhlight::harness
