#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dhlight/sim/network.hpp"

namespace dhlight::sim {

// Signal phases are numbered 1..4:
//   1 = {ET, WT}, 2 = {EL, WL}, 3 = {ST, NT}, 4 = {NL, SL}.
// Right turns are permitted under every phase.
inline constexpr int kMinPhase = 1;
inline constexpr int kMaxPhase = 4;
bool phase_permits(int phase, Side approach, Movement m);
std::array<std::pair<Side, Movement>, 2> phase_movements(int phase);

// A vehicle demand bound to road indices of a specific network.
struct Trip {
  std::vector<std::size_t> route;
  double depart = 0.0;
};

struct SimConfig {
  double delta_t = 10.0;    // decision interval
  double sim_step = 1.0;    // internal integration step
  double yellow_s = 0.0;    // no discharge for this long after a phase change
  bool record_queue_history = false;
};

using Observation = std::array<double, kObservationDim>;

class MetricsAccumulator {
 public:
  void reset(std::size_t vehicle_capacity);
  void on_enter(std::size_t vehicle, double t);
  void on_exit(std::size_t vehicle, double t);

  std::size_t entered() const { return entered_; }
  std::size_t exited() const { return exited_; }
  std::size_t in_network() const { return entered_ - exited_; }
  std::size_t throughput() const { return exited_; }

  // Mean over every entered vehicle of (exit - enter); vehicles still in the
  // network contribute (horizon_end - enter). Throws NumericError when no
  // vehicle has entered.
  double average_travel_time(double horizon_end) const;
  std::optional<double> enter_time(std::size_t vehicle) const;
  std::optional<double> exit_time(std::size_t vehicle) const;

  // Per-step per-lane queue lengths when history recording is enabled.
  const std::vector<std::vector<std::uint16_t>>& queue_history() const { return queue_history_; }
  void record_queues(std::vector<std::uint16_t> queues) { queue_history_.push_back(std::move(queues)); }

 private:
  std::vector<double> enter_;
  std::vector<double> exit_;
  std::vector<std::size_t> entered_ids_;
  std::size_t entered_ = 0;
  std::size_t exited_ = 0;
  std::vector<std::vector<std::uint16_t>> queue_history_;
};

// Discrete-time point-queue simulator. Vehicles traverse a road in its
// free-flow travel time, then wait at the stop line of the lane matching
// their next turn; green lanes discharge at the saturation rate while the
// downstream lane has room. A vehicle on the last road of its route leaves
// the network when it reaches the end of that road.
class Simulator {
 public:
  Simulator(const RoadNetwork& network, std::vector<Trip> trips, SimConfig cfg = {});

  void reset();
  // Applies one phase per intersection (values 1..4) and advances by delta_t.
  void step(std::span<const int> phases);
  void step(std::span<const int> phases, double dt);

  double time() const { return time_; }
  std::size_t agent_count() const { return network_->intersection_count(); }
  const RoadNetwork& network() const { return *network_; }
  const SimConfig& config() const { return cfg_; }
  int current_phase(std::size_t agent) const;

  Observation observe(std::size_t agent) const;
  // -(sum of stopped vehicles over the agent's 12 approach lanes).
  double reward(std::size_t agent) const;
  // Sum over movements the phase permits of upstream queue minus the mean
  // queue on the receiving road's lanes.
  double pressure(std::size_t agent, int phase) const;

  std::size_t queue_length(std::size_t lane) const { return lanes_.at(lane).queued.size(); }
  std::size_t vehicles_on_lane(std::size_t lane) const;
  // Lane index for approach slot k (0..11, order E(L,T,R) S W N), or nullopt.
  std::optional<std::size_t> approach_lane(std::size_t agent, std::size_t slot) const;

  const MetricsAccumulator& metrics() const { return metrics_; }
  std::size_t trip_count() const { return trips_.size(); }
  // Recounts vehicles lane by lane and compares against the accumulator.
  bool conservation_holds() const;
  double average_travel_time() const { return metrics_.average_travel_time(time_); }
  bool finished() const;

 private:
  enum class State : std::uint8_t { kPending, kTraveling, kQueued, kExited };
  struct Vehicle {
    std::uint32_t trip = 0;
    std::uint32_t leg = 0;
    std::size_t lane = 0;
    double arrival = 0.0;
    State state = State::kPending;
  };
  struct Lane {
    std::deque<std::uint32_t> traveling;
    std::deque<std::uint32_t> queued;
    double credit = 0.0;
  };

  void check_actions(std::span<const int> phases) const;
  void substep(double h);
  std::size_t lane_for_leg(const Vehicle& v, std::size_t leg) const;
  void enter_road(std::uint32_t id, std::size_t leg, double t);

  const RoadNetwork* network_;
  std::vector<Trip> trips_;
  SimConfig cfg_;

  double time_ = 0.0;
  std::size_t next_trip_ = 0;
  std::vector<Vehicle> vehicles_;
  std::vector<Lane> lanes_;
  std::vector<int> phase_;
  std::vector<double> yellow_left_;
  MetricsAccumulator metrics_;
};

// Writes one CSV record per intersection: t,intersection_id,phase,q_EL..q_NR.
class ReplayLog {
 public:
  explicit ReplayLog(std::ostream& out);
  void record(const Simulator& sim);

 private:
  std::ostream* out_;
};

}  // namespace dhlight::sim
