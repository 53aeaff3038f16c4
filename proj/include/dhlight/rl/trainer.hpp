#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <vector>

#include "dhlight/dhg/critic.hpp"
#include "dhlight/rl/ppo.hpp"
#include "dhlight/sim/simulator.hpp"

namespace dhlight::rl {

struct EpisodeMetrics {
  std::size_t episode = 0;
  double att_secs = 0.0;
  std::size_t throughput = 0;
  double mean_reward = 0.0;  // per agent per decision, unscaled
  double l_recon = 0.0;      // mean over minibatches
  double l_clip = 0.0;       // mean over minibatches
  double value_mse = 0.0;    // mean over minibatches
  std::size_t updates = 0;   // optimizer steps taken this episode
};

struct TrainerOptions {
  double episode_seconds = 3600.0;
  // Optional per-step CSV dump of the generated hyperedges.
  std::ostream* hyperedge_dump = nullptr;
};

// Multi-agent PPO with a shared actor and the hypergraph critic. One
// simulator instance is reset at the start of every episode.
class Trainer {
 public:
  Trainer(sim::Simulator& env, const Hyperparameters& hp, std::uint64_t seed, TrainerOptions options = {});

  // Rolls out one episode, runs the update phase(s) and returns its metrics.
  EpisodeMetrics run_episode();
  std::vector<EpisodeMetrics> train(std::size_t episodes,
                                    const std::function<void(const EpisodeMetrics&)>& on_episode = {});

  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  const Actor& actor() const { return *actor_; }
  const dhg::HypergraphCritic& critic() const { return *critic_; }
  const Hyperparameters& hyperparameters() const { return hp_; }
  std::size_t episodes_done() const { return episode_; }

  // N×16 network input built from the simulator state.
  Matrix observation_matrix() const;

 private:
  struct UpdateStats {
    double l_recon = 0.0;
    double l_clip = 0.0;
    double value_mse = 0.0;
    std::size_t steps = 0;
  };
  double critic_value(const Matrix& obs, const Matrix& prev_obs) const;
  UpdateStats update();

  sim::Simulator* env_;
  Hyperparameters hp_;
  TrainerOptions options_;
  std::mt19937_64 rng_;
  nn::ParameterStore store_;
  std::unique_ptr<Actor> actor_;
  std::unique_ptr<dhg::HypergraphCritic> critic_;
  RolloutBuffer buffer_;
  std::size_t episode_ = 0;
  std::size_t global_step_ = 0;
};

}  // namespace dhlight::rl
