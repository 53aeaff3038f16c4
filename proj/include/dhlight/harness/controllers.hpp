#pragma once

#include <vector>

#include "dhlight/sim/simulator.hpp"

namespace dhlight::harness {

// Cyclic schedule: the phase at time t is the one whose cumulative split
// window contains t mod cycle.
class FixedTimeController {
 public:
  // Throws ConfigError unless the four splits are >= delta_t and sum to cycle.
  FixedTimeController(double cycle, std::vector<double> splits, double delta_t);

  int phase_at(double t) const;
  double cycle() const { return cycle_; }
  const std::vector<double>& splits() const { return splits_; }

 private:
  double cycle_;
  std::vector<double> splits_;
};

FixedTimeController fixed_time_controller(double cycle = 120.0, std::vector<double> splits = {30, 30, 30, 30},
                                          double delta_t = 10.0);

// argmax over phases of the simulator's pressure, ties to the lowest phase.
int max_pressure_controller(const sim::Simulator& state, std::size_t agent);

}  // namespace dhlight::harness
