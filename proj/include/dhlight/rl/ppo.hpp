#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dhlight/nn/matrix.hpp"
#include "dhlight/nn/parameter_store.hpp"
#include "dhlight/nn/tape.hpp"

namespace dhlight::rl {

using nn::Matrix;
using nn::Var;

enum class RewardMode { kSum, kMean };

struct Hyperparameters {
  double gamma = 0.91;
  double lambda_gae = 0.86;
  double clip_eps = 0.3;
  double learning_rate = 3e-4;
  std::size_t batch_size = 50;
  std::size_t episodes = 100;
  std::size_t buffer_capacity = 1000;
  std::size_t heads = 1;
  double recon_lambda = 0.001;
  double gamma2 = 0.2;
  double beta = 0.3;
  double zeta = 0.3;

  std::size_t epochs = 4;
  std::size_t embed_dim = 32;
  std::size_t actor_hidden = 64;
  std::size_t value_hidden = 64;
  RewardMode reward_mode = RewardMode::kSum;
  double obs_scale = 1.0;       // multiplies lane counts before they reach either network
  double reward_scale = 0.01;   // multiplies the global reward before TD errors
  bool normalize_advantages = true;
  double entropy_coef = 0.0;    // 0 disables the entropy bonus
  double max_grad_norm = 0.0;   // 0 disables gradient clipping

  // Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const Hyperparameters&) const = default;
};

// ---- actor ----------------------------------------------------------------

// Shared policy MLP obs -> hidden -> hidden -> 4 with a softmax head.
class Actor {
 public:
  Actor(nn::ParameterStore& store, std::size_t obs_dim, std::size_t hidden, std::mt19937_64& rng,
        const std::string& prefix = "actor.");
  Actor(const nn::ParameterStore& store, std::size_t obs_dim, std::size_t hidden,
        const std::string& prefix = "actor.");

  std::size_t obs_dim() const { return obs_dim_; }

  // Row-wise log-probabilities for a batch of observations (B×obs_dim -> B×4).
  Var log_probs(nn::Tape& tape, nn::ParameterStore& store, const Matrix& obs) const;
  // Probabilities without recording a tape.
  Matrix probs(const nn::ParameterStore& store, const Matrix& obs) const;

 private:
  std::size_t obs_dim_;
  nn::ParamId w1_, b1_, w2_, b2_, w3_, b3_;
};

// Single-observation distribution; throws DimensionError unless obs has the
// actor's input width.
std::vector<double> actor_forward(const Actor& actor, const nn::ParameterStore& store, std::span<const double> obs);

struct SampledAction {
  std::size_t index = 0;  // 0-based; phase = index + 1
  double log_prob = 0.0;
};

SampledAction sample_action(std::span<const double> dist, std::mt19937_64& rng);

// ---- advantage estimation -------------------------------------------------

double td_error(double reward, double value, double next_value, double gamma, bool terminal);
std::vector<double> gae(std::span<const double> deltas, double gamma, double lambda_gae);
double probability_ratio(double logp_new, double logp_old);

// Scalar clipped surrogate, negated and averaged over samples.
double ppo_clip_loss(std::span<const double> ratios, std::span<const double> advantages, double eps);
// Traced variant; logp_new, logp_old and advantages are B×1.
Var ppo_clip_loss(Var logp_new, const Matrix& logp_old, const Matrix& advantages, double eps);

double critic_loss(double l_recon, double mse, double beta);
Var critic_loss(Var prediction, Var target, Var l_recon, double beta);

// ---- rollout storage ------------------------------------------------------

struct Transition {
  Matrix obs;        // N×16 network input
  Matrix prev_obs;   // N×16, previous decision's input (obs itself at t=0)
  std::vector<std::size_t> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  double value = 0.0;
  bool terminal = false;
  // Filled once the segment is complete.
  double advantage = 0.0;
  double target = 0.0;
};

class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool full() const { return items_.size() >= capacity_; }
  bool empty() const { return items_.empty(); }

  // Throws ConfigError when already full.
  void push(Transition t);
  void clear() { items_.clear(); }

  std::vector<Transition>& items() { return items_; }
  const std::vector<Transition>& items() const { return items_; }

  // Computes δ, Â and y = Â + V over the stored segment; bootstrap_value is
  // V(s) after the last transition (ignored when it is terminal).
  void finish_segment(double gamma, double lambda_gae, double bootstrap_value, RewardMode mode, double reward_scale);

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
};

// ---- checkpoints ----------------------------------------------------------

void save_checkpoint(const std::string& path, const nn::ParameterStore& store);
// Replaces the values and Adam state of every parameter in `store`; names and
// shapes must match. Throws DataError on a malformed or mismatched file.
void load_checkpoint(const std::string& path, nn::ParameterStore& store);
// Loads a checkpoint into an empty store.
nn::ParameterStore read_checkpoint(const std::string& path);

}  // namespace dhlight::rl
