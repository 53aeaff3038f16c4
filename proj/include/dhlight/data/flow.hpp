#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dhlight/sim/network.hpp"
#include "dhlight/sim/simulator.hpp"

namespace dhlight::data {

struct TurnRatios {
  double left = 0.1;
  double through = 0.6;
  double right = 0.3;

  // Throws ConfigError unless all are non-negative and sum to 1 ± 1e-9.
  void validate() const;
  bool operator==(const TurnRatios&) const = default;
};

struct VehicleDemand {
  std::vector<std::string> route;  // road ids
  double entry_time = 0.0;
  bool operator==(const VehicleDemand&) const = default;
};

// Vehicle demands sorted by entry time.
struct FlowSpec {
  std::vector<VehicleDemand> vehicles;

  std::size_t total() const { return vehicles.size(); }
  // Entry times non-negative and non-decreasing.
  bool well_formed() const;
  bool operator==(const FlowSpec&) const = default;
};

// Resolves road ids against the network; throws ReferenceError for unknown
// roads or disconnected routes.
std::vector<sim::Trip> bind_flow(const FlowSpec& flow, const sim::RoadNetwork& network);

// 4x4 Gaussian preset: 1473 vehicles over a 3600 s horizon.
struct GaussianFlowConfig {
  std::size_t total = 1473;
  double horizon = 3600.0;
  TurnRatios turns{};
};

// Entry times ~ N(horizon/2, horizon/6) resampled until inside [0, horizon);
// entry roads drawn uniformly from the periphery; turns sampled per
// intersection until the vehicle leaves the grid.
FlowSpec gen_gaussian_flow(std::uint64_t seed, const sim::RoadNetwork& network,
                           const GaussianFlowConfig& cfg = {});

// 6x6 uniform preset. Rates are per entry road; the default horizon makes the
// total come out at 3000 vehicles on a 6x6 grid.
struct UniformFlowConfig {
  double horizon = 4608.0;
  double west_east_per_hour = 300.0;
  double south_north_per_hour = 90.0;
  TurnRatios turns{0.0, 1.0, 0.0};
};

// Equally spaced arrivals starting at t=0 on every west-side entry road
// (travelling east) and every south-side entry road (travelling north).
FlowSpec gen_uniform_flow(std::uint64_t seed, const sim::RoadNetwork& network,
                          const UniformFlowConfig& cfg = {});

// Samples a route from `entry_road` until it reaches an exit road.
std::vector<std::string> sample_route(const sim::RoadNetwork& network, std::size_t entry_road,
                                      const TurnRatios& turns, std::mt19937_64& rng);

}  // namespace dhlight::data
