#include "dhlight/rl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dhlight/error.hpp"
#include "dhlight/nn/optim.hpp"

namespace dhlight::rl {

Trainer::Trainer(sim::Simulator& env, const Hyperparameters& hp, std::uint64_t seed, TrainerOptions options)
    : env_(&env), hp_(hp), options_(options), rng_(seed), buffer_(hp.buffer_capacity) {
  hp_.validate();
  if (!(options_.episode_seconds > 0.0)) throw ConfigError("episode length must be positive");
  actor_ = std::make_unique<Actor>(store_, sim::kObservationDim, hp_.actor_hidden, rng_);
  dhg::CriticConfig cc;
  cc.agents = env.agent_count();
  cc.obs_dim = sim::kObservationDim;
  cc.embed_dim = hp_.embed_dim;
  cc.heads = hp_.heads;
  cc.value_hidden = hp_.value_hidden;
  cc.zeta = hp_.zeta;
  cc.lambda = hp_.recon_lambda;
  cc.gamma2 = hp_.gamma2;
  critic_ = std::make_unique<dhg::HypergraphCritic>(store_, cc, rng_);
}

Matrix Trainer::observation_matrix() const {
  const std::size_t n = env_->agent_count();
  Matrix m(n, sim::kObservationDim);
  for (std::size_t i = 0; i < n; ++i) {
    const sim::Observation o = env_->observe(i);
    for (std::size_t j = 0; j < sim::kObservationDim; ++j) {
      m(i, j) = j < sim::kPhaseCount ? o[j] : o[j] * hp_.obs_scale;
    }
  }
  return m;
}

double Trainer::critic_value(const Matrix& obs, const Matrix& prev_obs) const {
  nn::Tape tape;
  const nn::ParameterStore& frozen = store_;
  return critic_->forward(tape, frozen, obs, prev_obs).value.scalar();
}

EpisodeMetrics Trainer::run_episode() {
  const std::size_t n = env_->agent_count();
  const double dt = env_->config().delta_t;
  const auto steps = static_cast<std::size_t>(std::ceil(options_.episode_seconds / dt - 1e-9));

  env_->reset();
  buffer_.clear();
  EpisodeMetrics metrics;
  metrics.episode = episode_;
  UpdateStats totals;
  double reward_sum = 0.0;

  Matrix obs = observation_matrix();
  Matrix prev = obs;
  std::vector<int> phases(n);
  for (std::size_t step = 0; step < steps; ++step) {
    if (options_.hyperedge_dump) dhg::write_hyperedge_dump(*options_.hyperedge_dump, global_step_, critic_->edges(store_));
    ++global_step_;

    Transition tr;
    tr.obs = obs;
    tr.prev_obs = prev;
    tr.value = critic_value(obs, prev);
    const Matrix probs = actor_->probs(store_, obs);
    for (std::size_t i = 0; i < n; ++i) {
      const SampledAction a = sample_action(probs.row(i), rng_);
      tr.actions.push_back(a.index);
      tr.log_probs.push_back(a.log_prob);
      phases[i] = static_cast<int>(a.index) + 1;
    }
    const double remaining = options_.episode_seconds - env_->time();
    env_->step(phases, std::min(dt, remaining));
    for (std::size_t i = 0; i < n; ++i) {
      tr.rewards.push_back(env_->reward(i));
      reward_sum += tr.rewards.back();
    }
    tr.terminal = step + 1 == steps;
    prev = obs;
    obs = observation_matrix();
    buffer_.push(std::move(tr));

    if (buffer_.full() || buffer_.items().back().terminal) {
      const double bootstrap = buffer_.items().back().terminal ? 0.0 : critic_value(obs, prev);
      buffer_.finish_segment(hp_.gamma, hp_.lambda_gae, bootstrap, hp_.reward_mode, hp_.reward_scale);
      const UpdateStats s = update();
      totals.l_recon += s.l_recon;
      totals.l_clip += s.l_clip;
      totals.value_mse += s.value_mse;
      totals.steps += s.steps;
      buffer_.clear();
    }
  }

  metrics.att_secs = env_->average_travel_time();
  metrics.throughput = env_->metrics().throughput();
  metrics.mean_reward = reward_sum / static_cast<double>(std::max<std::size_t>(1, steps * n));
  if (totals.steps > 0) {
    metrics.l_recon = totals.l_recon / static_cast<double>(totals.steps);
    metrics.l_clip = totals.l_clip / static_cast<double>(totals.steps);
    metrics.value_mse = totals.value_mse / static_cast<double>(totals.steps);
  }
  metrics.updates = totals.steps;
  ++episode_;
  return metrics;
}

std::vector<EpisodeMetrics> Trainer::train(std::size_t episodes,
                                           const std::function<void(const EpisodeMetrics&)>& on_episode) {
  std::vector<EpisodeMetrics> out;
  out.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    out.push_back(run_episode());
    if (on_episode) on_episode(out.back());
  }
  return out;
}

Trainer::UpdateStats Trainer::update() {
  std::vector<Transition>& items = buffer_.items();
  const std::size_t total = items.size();
  const std::size_t n = env_->agent_count();
  UpdateStats stats;
  if (total == 0) return stats;

  std::vector<double> adv(total);
  for (std::size_t t = 0; t < total; ++t) adv[t] = items[t].advantage;
  if (hp_.normalize_advantages && total > 1) {
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(total);
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(total));
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);
  }

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < hp_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t begin = 0; begin < total; begin += hp_.batch_size) {
      const std::size_t count = std::min(hp_.batch_size, total - begin);
      Matrix obs(count * n, sim::kObservationDim);
      Matrix old_logp(count * n, 1);
      Matrix advantages(count * n, 1);
      Matrix targets(count, 1);
      std::vector<std::size_t> actions(count * n);
      for (std::size_t b = 0; b < count; ++b) {
        const Transition& tr = items[order[begin + b]];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t row = b * n + i;
          std::copy(tr.obs.row(i).begin(), tr.obs.row(i).end(), obs.row(row).begin());
          old_logp[row] = tr.log_probs[i];
          advantages[row] = adv[order[begin + b]];
          actions[row] = tr.actions[i];
        }
        targets[b] = tr.target;
      }

      nn::Tape tape;
      Var logp_all = actor_->log_probs(tape, store_, obs);
      Var actor_loss = ppo_clip_loss(nn::pick(logp_all, actions), old_logp, advantages, hp_.clip_eps);
      Var loss = actor_loss;
      if (hp_.entropy_coef > 0.0) {
        // mean entropy = -mean_rows(sum_j p_j log p_j)
        Var neg_entropy = nn::scale(nn::sum(nn::hadamard(nn::exp(logp_all), logp_all)),
                                    1.0 / static_cast<double>(count * n));
        loss = nn::add(loss, nn::scale(neg_entropy, hp_.entropy_coef));
      }

      std::vector<Var> values;
      std::vector<Var> recon;
      for (std::size_t b = 0; b < count; ++b) {
        const Transition& tr = items[order[begin + b]];
        dhg::CriticOutput out = critic_->forward(tape, store_, tr.obs, tr.prev_obs);
        values.push_back(out.value);
        recon.push_back(out.l_recon);
      }
      Var prediction = nn::concat_rows(values);
      Var l_recon = nn::mean(nn::concat_rows(recon));
      Var critic = critic_loss(prediction, tape.constant(targets), l_recon, hp_.beta);
      loss = nn::add(loss, critic);

      store_.zero_grads();
      tape.backward(loss);
      if (hp_.max_grad_norm > 0.0) store_.clip_grad_norm(hp_.max_grad_norm);
      nn::adam_step(store_, hp_.learning_rate);

      double mse = 0.0;
      for (std::size_t b = 0; b < count; ++b) {
        const double e = prediction.value()[b] - targets[b];
        mse += e * e;
      }
      stats.l_recon += l_recon.scalar();
      stats.l_clip += actor_loss.scalar();
      stats.value_mse += mse / static_cast<double>(count);
      ++stats.steps;
    }
  }
  return stats;
}

}  // namespace dhlight::rl
