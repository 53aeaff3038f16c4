#include "dhlight/harness/controllers.hpp"

#include <cmath>
#include <numeric>

#include "dhlight/error.hpp"

namespace dhlight::harness {

FixedTimeController::FixedTimeController(double cycle, std::vector<double> splits, double delta_t)
    : cycle_(cycle), splits_(std::move(splits)) {
  if (splits_.size() != sim::kPhaseCount) throw ConfigError("fixed-time needs exactly four splits");
  if (!(cycle_ > 0.0)) throw ConfigError("fixed-time cycle must be positive");
  for (double s : splits_) {
    if (!(s >= delta_t)) {
      throw ConfigError("fixed-time split " + std::to_string(s) + " is shorter than the decision interval");
    }
  }
  const double total = std::accumulate(splits_.begin(), splits_.end(), 0.0);
  if (std::abs(total - cycle_) > 1e-9) {
    throw ConfigError("fixed-time splits sum to " + std::to_string(total) + ", cycle is " + std::to_string(cycle_));
  }
}

int FixedTimeController::phase_at(double t) const {
  double offset = std::fmod(t, cycle_);
  if (offset < 0.0) offset += cycle_;
  double edge = 0.0;
  for (std::size_t p = 0; p < splits_.size(); ++p) {
    edge += splits_[p];
    if (offset < edge - 1e-9) return static_cast<int>(p) + 1;
  }
  return static_cast<int>(splits_.size());
}

FixedTimeController fixed_time_controller(double cycle, std::vector<double> splits, double delta_t) {
  return FixedTimeController(cycle, std::move(splits), delta_t);
}

int max_pressure_controller(const sim::Simulator& state, std::size_t agent) {
  int best = sim::kMinPhase;
  double best_pressure = state.pressure(agent, best);
  for (int p = sim::kMinPhase + 1; p <= sim::kMaxPhase; ++p) {
    const double v = state.pressure(agent, p);
    if (v > best_pressure) {
      best = p;
      best_pressure = v;
    }
  }
  return best;
}

}  // namespace dhlight::harness
