#include "dhlight/sim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "dhlight/error.hpp"

namespace dhlight::sim {

namespace {

constexpr double kCreditEps = 1e-9;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::array<std::array<std::pair<Side, Movement>, 2>, 4> kPhaseTable{{
    {{{Side::kEast, Movement::kThrough}, {Side::kWest, Movement::kThrough}}},
    {{{Side::kEast, Movement::kLeft}, {Side::kWest, Movement::kLeft}}},
    {{{Side::kSouth, Movement::kThrough}, {Side::kNorth, Movement::kThrough}}},
    {{{Side::kNorth, Movement::kLeft}, {Side::kSouth, Movement::kLeft}}},
}};

}  // namespace

std::array<std::pair<Side, Movement>, 2> phase_movements(int phase) {
  if (phase < kMinPhase || phase > kMaxPhase) throw ActionError("invalid phase " + std::to_string(phase));
  return kPhaseTable[static_cast<std::size_t>(phase - 1)];
}

bool phase_permits(int phase, Side approach, Movement m) {
  if (m == Movement::kRight) return true;
  for (const auto& [s, mv] : phase_movements(phase)) {
    if (s == approach && mv == m) return true;
  }
  return false;
}

// ---- metrics --------------------------------------------------------------

void MetricsAccumulator::reset(std::size_t vehicle_capacity) {
  enter_.assign(vehicle_capacity, kNaN);
  exit_.assign(vehicle_capacity, kNaN);
  entered_ids_.clear();
  entered_ = 0;
  exited_ = 0;
  queue_history_.clear();
}

void MetricsAccumulator::on_enter(std::size_t vehicle, double t) {
  if (vehicle >= enter_.size()) {
    enter_.resize(vehicle + 1, kNaN);
    exit_.resize(vehicle + 1, kNaN);
  }
  enter_[vehicle] = t;
  entered_ids_.push_back(vehicle);
  ++entered_;
}

void MetricsAccumulator::on_exit(std::size_t vehicle, double t) {
  exit_.at(vehicle) = t;
  ++exited_;
}

double MetricsAccumulator::average_travel_time(double horizon_end) const {
  if (entered_ == 0) throw NumericError("average travel time is undefined: no vehicle entered");
  double total = 0.0;
  for (std::size_t v : entered_ids_) {
    const double end = std::isnan(exit_[v]) ? horizon_end : exit_[v];
    total += end - enter_[v];
  }
  return total / static_cast<double>(entered_);
}

std::optional<double> MetricsAccumulator::enter_time(std::size_t vehicle) const {
  if (vehicle >= enter_.size() || std::isnan(enter_[vehicle])) return std::nullopt;
  return enter_[vehicle];
}

std::optional<double> MetricsAccumulator::exit_time(std::size_t vehicle) const {
  if (vehicle >= exit_.size() || std::isnan(exit_[vehicle])) return std::nullopt;
  return exit_[vehicle];
}

// ---- simulator ------------------------------------------------------------

Simulator::Simulator(const RoadNetwork& network, std::vector<Trip> trips, SimConfig cfg)
    : network_(&network), trips_(std::move(trips)), cfg_(cfg) {
  if (!(cfg_.delta_t > 0.0) || !(cfg_.sim_step > 0.0) || cfg_.yellow_s < 0.0) {
    throw ConfigError("simulator needs delta_t > 0, sim_step > 0 and yellow >= 0");
  }
  for (std::size_t i = 0; i < trips_.size(); ++i) {
    const Trip& trip = trips_[i];
    if (trip.route.empty()) throw ConfigError("trip " + std::to_string(i) + " has an empty route");
    if (!(trip.depart >= 0.0)) throw ConfigError("trip " + std::to_string(i) + " departs before t=0");
    for (std::size_t k = 0; k < trip.route.size(); ++k) {
      if (trip.route[k] >= network.road_count()) {
        throw ReferenceError("trip " + std::to_string(i) + " references road index " +
                             std::to_string(trip.route[k]));
      }
      if (k + 1 < trip.route.size()) {
        const Road& a = network.road(trip.route[k]);
        const Road& b = network.road(trip.route[k + 1]);
        if (a.to == kBoundary || a.to != b.from) {
          throw ReferenceError("trip " + std::to_string(i) + " route is disconnected between '" + a.id +
                               "' and '" + b.id + "'");
        }
        if (!movement_between(a.to_side, b.from_side)) {
          throw UnsupportedFeatureError("trip " + std::to_string(i) + " makes a U-turn at '" +
                                        network.intersection(a.to).id + "'");
        }
      }
    }
  }
  std::stable_sort(trips_.begin(), trips_.end(),
                   [](const Trip& a, const Trip& b) { return a.depart < b.depart; });
  reset();
}

void Simulator::reset() {
  time_ = 0.0;
  next_trip_ = 0;
  vehicles_.assign(trips_.size(), Vehicle{});
  lanes_.assign(network_->lane_count(), Lane{});
  phase_.assign(network_->intersection_count(), kMinPhase);
  yellow_left_.assign(network_->intersection_count(), 0.0);
  metrics_.reset(trips_.size());
}

int Simulator::current_phase(std::size_t agent) const {
  network_->intersection(agent);
  return phase_[agent];
}

void Simulator::check_actions(std::span<const int> phases) const {
  if (phases.size() != agent_count()) {
    throw ActionError("expected " + std::to_string(agent_count()) + " actions, got " +
                      std::to_string(phases.size()));
  }
  for (std::size_t i = 0; i < phases.size(); ++i) {
    if (phases[i] < kMinPhase || phases[i] > kMaxPhase) {
      throw ActionError("agent " + std::to_string(i) + " ('" + network_->intersection(i).id +
                        "') chose phase " + std::to_string(phases[i]) + ", expected 1..4");
    }
  }
}

void Simulator::step(std::span<const int> phases) { step(phases, cfg_.delta_t); }

void Simulator::step(std::span<const int> phases, double dt) {
  if (!(dt > 0.0)) throw ConfigError("step: dt must be positive");
  check_actions(phases);
  for (std::size_t i = 0; i < phases.size(); ++i) {
    if (phases[i] != phase_[i]) {
      phase_[i] = phases[i];
      yellow_left_[i] = cfg_.yellow_s;
    }
  }
  double remaining = dt;
  while (remaining > 1e-12) {
    const double h = std::min(cfg_.sim_step, remaining);
    substep(h);
    remaining -= h;
  }
  if (cfg_.record_queue_history) {
    std::vector<std::uint16_t> q(lanes_.size());
    for (std::size_t l = 0; l < lanes_.size(); ++l) q[l] = static_cast<std::uint16_t>(lanes_[l].queued.size());
    metrics_.record_queues(std::move(q));
  }
  if (!conservation_holds()) {
    throw NumericError("vehicle conservation violated at t=" + std::to_string(time_));
  }
}

std::size_t Simulator::lane_for_leg(const Vehicle& v, std::size_t leg) const {
  const Trip& trip = trips_[v.trip];
  const std::size_t road = trip.route[leg];
  if (leg + 1 >= trip.route.size()) return RoadNetwork::lane_of(road, Movement::kThrough);
  const Road& here = network_->road(road);
  const Road& next = network_->road(trip.route[leg + 1]);
  return RoadNetwork::lane_of(road, *movement_between(here.to_side, next.from_side));
}

void Simulator::enter_road(std::uint32_t id, std::size_t leg, double t) {
  Vehicle& v = vehicles_[id];
  v.leg = static_cast<std::uint32_t>(leg);
  v.lane = lane_for_leg(v, leg);
  v.arrival = t + network_->road(trips_[v.trip].route[leg]).travel_time();
  v.state = State::kTraveling;
  lanes_[v.lane].traveling.push_back(id);
}

void Simulator::substep(double h) {
  const double end = time_ + h;

  while (next_trip_ < trips_.size() && trips_[next_trip_].depart < end) {
    const auto id = static_cast<std::uint32_t>(next_trip_);
    vehicles_[id].trip = id;
    enter_road(id, 0, trips_[next_trip_].depart);
    metrics_.on_enter(id, trips_[next_trip_].depart);
    ++next_trip_;
  }

  for (Lane& lane : lanes_) {
    while (!lane.traveling.empty() && vehicles_[lane.traveling.front()].arrival <= end) {
      const std::uint32_t id = lane.traveling.front();
      lane.traveling.pop_front();
      Vehicle& v = vehicles_[id];
      if (v.leg + 1 >= trips_[v.trip].route.size()) {
        v.state = State::kExited;
        metrics_.on_exit(id, v.arrival);
      } else {
        v.state = State::kQueued;
        lane.queued.push_back(id);
      }
    }
  }

  const double sat = network_->lane_config().saturation_vps;
  for (std::size_t a = 0; a < network_->intersection_count(); ++a) {
    const Intersection& node = network_->intersection(a);
    const bool yellow = yellow_left_[a] > 1e-12;
    for (std::size_t s = 0; s < kSides; ++s) {
      const int road = node.incoming[s];
      if (road < 0) continue;
      for (int m = 0; m < 3; ++m) {
        Lane& lane = lanes_[RoadNetwork::lane_of(static_cast<std::size_t>(road), static_cast<Movement>(m))];
        const bool green = !yellow && phase_permits(phase_[a], side_from_index(static_cast<int>(s)),
                                                     static_cast<Movement>(m));
        if (!green || lane.queued.empty()) {
          lane.credit = 0.0;
          continue;
        }
        lane.credit += sat * h;
        while (lane.credit >= 1.0 - kCreditEps && !lane.queued.empty()) {
          const std::uint32_t id = lane.queued.front();
          const Vehicle& v = vehicles_[id];
          const std::size_t next_leg = v.leg + 1;
          const std::size_t target = lane_for_leg(v, next_leg);
          const std::size_t next_road = trips_[v.trip].route[next_leg];
          if (vehicles_on_lane(target) >= network_->lane_capacity(next_road)) {
            lane.credit = std::min(lane.credit, 1.0);
            break;
          }
          lane.queued.pop_front();
          enter_road(id, next_leg, end);
          lane.credit -= 1.0;
        }
        if (lane.queued.empty()) lane.credit = 0.0;
      }
    }
    yellow_left_[a] = std::max(0.0, yellow_left_[a] - h);
  }

  time_ = end;
}

std::size_t Simulator::vehicles_on_lane(std::size_t lane) const {
  const Lane& l = lanes_.at(lane);
  return l.traveling.size() + l.queued.size();
}

std::optional<std::size_t> Simulator::approach_lane(std::size_t agent, std::size_t slot) const {
  const Intersection& node = network_->intersection(agent);
  const int road = node.incoming[slot / kLanesPerRoad];
  if (road < 0) return std::nullopt;
  return RoadNetwork::lane_of(static_cast<std::size_t>(road), static_cast<Movement>(slot % kLanesPerRoad));
}

Observation Simulator::observe(std::size_t agent) const {
  network_->intersection(agent);
  Observation obs{};
  obs[static_cast<std::size_t>(phase_[agent] - 1)] = 1.0;
  for (std::size_t k = 0; k < kApproachLanes; ++k) {
    if (auto lane = approach_lane(agent, k)) obs[kPhaseCount + k] = static_cast<double>(vehicles_on_lane(*lane));
  }
  return obs;
}

double Simulator::reward(std::size_t agent) const {
  network_->intersection(agent);
  std::size_t queued = 0;
  for (std::size_t k = 0; k < kApproachLanes; ++k) {
    if (auto lane = approach_lane(agent, k)) queued += lanes_[*lane].queued.size();
  }
  return -static_cast<double>(queued);
}

double Simulator::pressure(std::size_t agent, int phase) const {
  const Intersection& node = network_->intersection(agent);
  if (phase < kMinPhase || phase > kMaxPhase) throw ActionError("pressure: invalid phase " + std::to_string(phase));
  double total = 0.0;
  for (std::size_t s = 0; s < kSides; ++s) {
    const int in_road = node.incoming[s];
    if (in_road < 0) continue;
    const Side approach = side_from_index(static_cast<int>(s));
    for (int m = 0; m < 3; ++m) {
      const auto mv = static_cast<Movement>(m);
      if (!phase_permits(phase, approach, mv)) continue;
      const int out_road = node.outgoing[side_index(exit_side(approach, mv))];
      if (out_road < 0) continue;
      const double upstream = static_cast<double>(lanes_[RoadNetwork::lane_of(in_road, mv)].queued.size());
      double downstream = 0.0;
      for (int k = 0; k < 3; ++k) {
        downstream += static_cast<double>(
            lanes_[RoadNetwork::lane_of(static_cast<std::size_t>(out_road), static_cast<Movement>(k))].queued.size());
      }
      total += upstream - downstream / static_cast<double>(kLanesPerRoad);
    }
  }
  return total;
}

bool Simulator::conservation_holds() const {
  std::size_t in_lanes = 0;
  for (const Lane& l : lanes_) in_lanes += l.traveling.size() + l.queued.size();
  return metrics_.entered() == in_lanes + metrics_.exited();
}

bool Simulator::finished() const {
  return next_trip_ == trips_.size() && metrics_.in_network() == 0;
}

// ---- replay log -----------------------------------------------------------

ReplayLog::ReplayLog(std::ostream& out) : out_(&out) {
  *out_ << "t,intersection_id,phase";
  for (int s = 0; s < 4; ++s)
    for (int m = 0; m < 3; ++m)
      *out_ << ",q_" << side_letter(side_from_index(s)) << movement_letter(static_cast<Movement>(m));
  *out_ << '\n';
}

void ReplayLog::record(const Simulator& sim) {
  for (std::size_t a = 0; a < sim.agent_count(); ++a) {
    *out_ << sim.time() << ',' << sim.network().intersection(a).id << ',' << sim.current_phase(a);
    for (std::size_t k = 0; k < kApproachLanes; ++k) {
      const auto lane = sim.approach_lane(a, k);
      *out_ << ',' << (lane ? sim.queue_length(*lane) : 0);
    }
    *out_ << '\n';
  }
}

}  // namespace dhlight::sim
