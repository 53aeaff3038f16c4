#include "dhlight/data/flow.hpp"

#include <algorithm>
#include <cmath>

#include "dhlight/error.hpp"

namespace dhlight::data {

using sim::kBoundary;
using sim::Movement;
using sim::RoadNetwork;

void TurnRatios::validate() const {
  if (left < 0.0 || through < 0.0 || right < 0.0) throw ConfigError("turn ratios must be non-negative");
  if (std::abs(left + through + right - 1.0) > 1e-9) {
    throw ConfigError("turn ratios must sum to 1, got " + std::to_string(left + through + right));
  }
}

bool FlowSpec::well_formed() const {
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    if (!(vehicles[i].entry_time >= 0.0)) return false;
    if (i > 0 && vehicles[i].entry_time < vehicles[i - 1].entry_time) return false;
  }
  return true;
}

std::vector<sim::Trip> bind_flow(const FlowSpec& flow, const RoadNetwork& network) {
  std::vector<sim::Trip> trips;
  trips.reserve(flow.vehicles.size());
  for (std::size_t i = 0; i < flow.vehicles.size(); ++i) {
    const VehicleDemand& d = flow.vehicles[i];
    if (d.route.empty()) throw ReferenceError("vehicle " + std::to_string(i) + " has an empty route");
    sim::Trip trip;
    trip.depart = d.entry_time;
    for (const std::string& id : d.route) {
      auto r = network.find_road(id);
      if (!r) throw ReferenceError("vehicle " + std::to_string(i) + " route references unknown road '" + id + "'");
      trip.route.push_back(*r);
    }
    for (std::size_t k = 0; k + 1 < trip.route.size(); ++k) {
      const sim::Road& a = network.road(trip.route[k]);
      const sim::Road& b = network.road(trip.route[k + 1]);
      if (a.to == kBoundary || a.to != b.from) {
        throw ReferenceError("vehicle " + std::to_string(i) + " route is disconnected between '" + a.id +
                             "' and '" + b.id + "'");
      }
    }
    trips.push_back(std::move(trip));
  }
  return trips;
}

std::vector<std::string> sample_route(const RoadNetwork& network, std::size_t entry_road,
                                      const TurnRatios& turns, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t max_legs = 4 * (network.intersection_count() + 4);
  std::vector<std::string> route{network.road(entry_road).id};
  std::size_t road = entry_road;
  while (network.road(road).to != kBoundary) {
    const sim::Road& r = network.road(road);
    const sim::Intersection& node = network.intersection(static_cast<std::size_t>(r.to));
    Movement m = Movement::kThrough;
    if (route.size() < max_legs) {
      const double u = unit(rng);
      m = u < turns.left ? Movement::kLeft : (u < turns.left + turns.through ? Movement::kThrough : Movement::kRight);
    }
    int next = node.outgoing[sim::side_index(sim::exit_side(r.to_side, m))];
    // Real networks may lack the sampled exit; fall back to through, right, left.
    for (Movement alt : {Movement::kThrough, Movement::kRight, Movement::kLeft}) {
      if (next >= 0) break;
      next = node.outgoing[sim::side_index(sim::exit_side(r.to_side, alt))];
    }
    if (next < 0) throw ConfigError("intersection '" + node.id + "' has no usable exit");
    road = static_cast<std::size_t>(next);
    route.push_back(network.road(road).id);
  }
  return route;
}

FlowSpec gen_gaussian_flow(std::uint64_t seed, const RoadNetwork& network, const GaussianFlowConfig& cfg) {
  if (cfg.total < 1) throw ConfigError("gaussian flow needs total >= 1");
  if (!(cfg.horizon > 0.0)) throw ConfigError("gaussian flow needs a positive horizon");
  cfg.turns.validate();
  const auto entries = network.entry_roads();
  if (entries.empty()) throw ConfigError("network has no entry roads");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> when(cfg.horizon / 2.0, cfg.horizon / 6.0);
  std::uniform_int_distribution<std::size_t> pick(0, entries.size() - 1);

  FlowSpec flow;
  flow.vehicles.reserve(cfg.total);
  for (std::size_t i = 0; i < cfg.total; ++i) {
    double t = when(rng);
    while (!(t >= 0.0 && t < cfg.horizon)) t = when(rng);
    const std::size_t entry = entries[pick(rng)];
    flow.vehicles.push_back({sample_route(network, entry, cfg.turns, rng), t});
  }
  std::stable_sort(flow.vehicles.begin(), flow.vehicles.end(),
                   [](const VehicleDemand& a, const VehicleDemand& b) { return a.entry_time < b.entry_time; });
  return flow;
}

FlowSpec gen_uniform_flow(std::uint64_t seed, const RoadNetwork& network, const UniformFlowConfig& cfg) {
  if (!(cfg.horizon > 0.0)) throw ConfigError("uniform flow needs a positive horizon");
  if (!(cfg.west_east_per_hour > 0.0) || !(cfg.south_north_per_hour > 0.0)) {
    throw ConfigError("uniform flow rates must be positive");
  }
  cfg.turns.validate();
  std::mt19937_64 rng(seed);
  FlowSpec flow;
  auto emit = [&](sim::Side approach, double per_hour) {
    const double spacing = 3600.0 / per_hour;
    for (std::size_t road : network.entry_roads()) {
      if (network.road(road).to_side != approach) continue;
      for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * spacing;
        if (t >= cfg.horizon) break;
        flow.vehicles.push_back({sample_route(network, road, cfg.turns, rng), t});
      }
    }
  };
  emit(sim::Side::kWest, cfg.west_east_per_hour);
  emit(sim::Side::kSouth, cfg.south_north_per_hour);
  std::stable_sort(flow.vehicles.begin(), flow.vehicles.end(),
                   [](const VehicleDemand& a, const VehicleDemand& b) { return a.entry_time < b.entry_time; });
  return flow;
}

}  // namespace dhlight::data
