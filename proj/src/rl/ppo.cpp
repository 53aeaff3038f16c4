#include "dhlight/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dhlight/error.hpp"

namespace dhlight::rl {

using nn::ParamId;
using nn::ParameterStore;

void Hyperparameters::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0,1]");
  if (!(lambda_gae > 0.0 && lambda_gae <= 1.0)) fail("lambda_gae must lie in (0,1]");
  if (!(clip_eps > 0.0)) fail("clip_eps must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (buffer_capacity < batch_size) fail("buffer_capacity must be at least batch_size");
  if (heads < 1 || embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0,1]");
  if (!(zeta >= 0.0 && zeta < 1.0)) fail("zeta must lie in [0,1)");
  if (!(recon_lambda >= 0.0)) fail("recon_lambda must be non-negative");
  if (!(gamma2 >= 0.0)) fail("gamma2 must be non-negative");
  if (epochs < 1) fail("epochs must be at least 1");
  if (actor_hidden < 1 || value_hidden < 1 || embed_dim < 1) fail("layer widths must be positive");
  if (!(obs_scale > 0.0)) fail("obs_scale must be positive");
  if (!(reward_scale > 0.0)) fail("reward_scale must be positive");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef must be non-negative");
  if (!(max_grad_norm >= 0.0)) fail("max_grad_norm must be non-negative");
}

// ---- actor ----------------------------------------------------------------

Actor::Actor(ParameterStore& store, std::size_t obs_dim, std::size_t hidden, std::mt19937_64& rng,
             const std::string& prefix)
    : obs_dim_(obs_dim) {
  w1_ = store.add(prefix + "w1", nn::xavier_uniform(obs_dim, hidden, rng));
  b1_ = store.add(prefix + "b1", Matrix(1, hidden));
  w2_ = store.add(prefix + "w2", nn::xavier_uniform(hidden, hidden, rng));
  b2_ = store.add(prefix + "b2", Matrix(1, hidden));
  // Zero output layer: the initial policy is uniform.
  w3_ = store.add(prefix + "w3", Matrix(hidden, 4));
  b3_ = store.add(prefix + "b3", Matrix(1, 4));
}

Actor::Actor(const ParameterStore& store, std::size_t obs_dim, std::size_t hidden, const std::string& prefix)
    : obs_dim_(obs_dim) {
  w1_ = store.find(prefix + "w1");
  b1_ = store.find(prefix + "b1");
  w2_ = store.find(prefix + "w2");
  b2_ = store.find(prefix + "b2");
  w3_ = store.find(prefix + "w3");
  b3_ = store.find(prefix + "b3");
  if (store.value(w1_).rows() != obs_dim || store.value(w1_).cols() != hidden) {
    throw DimensionError("stored actor has shape " + nn::shape_string(store.value(w1_)));
  }
}

Var Actor::log_probs(nn::Tape& tape, ParameterStore& store, const Matrix& obs) const {
  if (obs.cols() != obs_dim_) {
    throw DimensionError("actor expects " + std::to_string(obs_dim_) + " inputs, got " + nn::shape_string(obs));
  }
  auto p = [&](ParamId id) { return tape.param(store, id); };
  Var h = nn::relu(nn::dense(tape.constant(obs), p(w1_), p(b1_)));
  h = nn::relu(nn::dense(h, p(w2_), p(b2_)));
  return nn::log_softmax_rows(nn::dense(h, p(w3_), p(b3_)));
}

Matrix Actor::probs(const ParameterStore& store, const Matrix& obs) const {
  if (obs.cols() != obs_dim_) {
    throw DimensionError("actor expects " + std::to_string(obs_dim_) + " inputs, got " + nn::shape_string(obs));
  }
  Matrix h = nn::dense_forward(obs, store.value(w1_), store.value(b1_));
  for (double& x : h.data()) x = std::max(x, 0.0);
  h = nn::dense_forward(h, store.value(w2_), store.value(b2_));
  for (double& x : h.data()) x = std::max(x, 0.0);
  Matrix logits = nn::dense_forward(h, store.value(w3_), store.value(b3_));
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto p = nn::softmax(logits.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> actor_forward(const Actor& actor, const ParameterStore& store, std::span<const double> obs) {
  if (obs.size() != actor.obs_dim()) {
    throw DimensionError("actor expects " + std::to_string(actor.obs_dim()) + " inputs, got " +
                         std::to_string(obs.size()));
  }
  Matrix m(1, obs.size(), std::vector<double>(obs.begin(), obs.end()));
  Matrix p = actor.probs(store, m);
  return {p.data().begin(), p.data().end()};
}

SampledAction sample_action(std::span<const double> dist, std::mt19937_64& rng) {
  if (dist.empty()) throw ConfigError("cannot sample from an empty distribution");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  std::size_t pick = dist.size() - 1;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    acc += dist[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  // Rounding can leave u above the final cumulative sum; never land on a zero entry.
  while (dist[pick] <= 0.0 && pick > 0) --pick;
  return {pick, std::log(dist[pick])};
}

// ---- advantage estimation -------------------------------------------------

double td_error(double reward, double value, double next_value, double gamma, bool terminal) {
  return reward + (terminal ? 0.0 : gamma * next_value) - value;
}

std::vector<double> gae(std::span<const double> deltas, double gamma, double lambda_gae) {
  std::vector<double> adv(deltas.size());
  double running = 0.0;
  for (std::size_t t = deltas.size(); t-- > 0;) {
    running = deltas[t] + gamma * lambda_gae * running;
    adv[t] = running;
  }
  return adv;
}

double probability_ratio(double logp_new, double logp_old) { return std::exp(logp_new - logp_old); }

double ppo_clip_loss(std::span<const double> ratios, std::span<const double> advantages, double eps) {
  if (ratios.size() != advantages.size()) throw DimensionError("ratios and advantages differ in length");
  if (ratios.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double clipped = std::clamp(ratios[i], 1.0 - eps, 1.0 + eps);
    total += std::min(ratios[i] * advantages[i], clipped * advantages[i]);
  }
  return -total / static_cast<double>(ratios.size());
}

Var ppo_clip_loss(Var logp_new, const Matrix& logp_old, const Matrix& advantages, double eps) {
  nn::Tape& tape = *logp_new.tape();
  Var ratio = nn::exp(nn::sub(logp_new, tape.constant(logp_old)));
  Var adv = tape.constant(advantages);
  Var unclipped = nn::hadamard(ratio, adv);
  Var clipped = nn::hadamard(nn::clamp(ratio, 1.0 - eps, 1.0 + eps), adv);
  return nn::scale(nn::mean(nn::minimum(unclipped, clipped)), -1.0);
}

double critic_loss(double l_recon, double mse, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0,1], got " + std::to_string(beta));
  return beta * l_recon + (1.0 - beta) * mse;
}

Var critic_loss(Var prediction, Var target, Var l_recon, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0,1], got " + std::to_string(beta));
  return nn::add(nn::scale(l_recon, beta), nn::scale(nn::mse(prediction, target), 1.0 - beta));
}

// ---- rollout storage ------------------------------------------------------

RolloutBuffer::RolloutBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("buffer capacity must be at least 1");
  items_.reserve(capacity);
}

void RolloutBuffer::push(Transition t) {
  if (full()) throw ConfigError("rollout buffer is full");
  for (double lp : t.log_probs) {
    if (lp > 0.0) throw NumericError("log-probability above zero");
  }
  items_.push_back(std::move(t));
}

void RolloutBuffer::finish_segment(double gamma, double lambda_gae, double bootstrap_value, RewardMode mode,
                                   double reward_scale) {
  const std::size_t n = items_.size();
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    Transition& tr = items_[t];
    double r = 0.0;
    for (double x : tr.rewards) r += x;
    if (mode == RewardMode::kMean && !tr.rewards.empty()) r /= static_cast<double>(tr.rewards.size());
    r *= reward_scale;
    const double next_value = t + 1 < n ? items_[t + 1].value : bootstrap_value;
    const double delta = td_error(r, tr.value, next_value, gamma, tr.terminal);
    running = delta + (tr.terminal ? 0.0 : gamma * lambda_gae * running);
    tr.advantage = running;
    tr.target = running + tr.value;
  }
}

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'H', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError(path + ": truncated checkpoint");
  return v;
}

void put_matrix(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix get_matrix(std::istream& in, std::size_t rows, std::size_t cols, const std::string& path) {
  Matrix m(rows, cols);
  if (!in.read(reinterpret_cast<char*>(m.data().data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
    throw DataError(path + ": truncated checkpoint");
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, store.size());
  for (const nn::Parameter& p : store.params()) {
    put<std::uint64_t>(out, p.name.size());
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint64_t>(out, p.value.rows());
    put<std::uint64_t>(out, p.value.cols());
    put<std::uint64_t>(out, p.step);
    put_matrix(out, p.value);
    put_matrix(out, p.first_moment);
    put_matrix(out, p.second_moment);
  }
  if (!out) throw DataError("failed writing checkpoint " + path);
}

ParameterStore read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ParseError(path + ": not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) throw UnsupportedFeatureError(path + ": checkpoint version " + std::to_string(version));
  const auto count = get<std::uint64_t>(in, path);
  ParameterStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint64_t>(in, path);
    if (len > 4096) throw ParseError(path + ": implausible parameter name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) throw DataError(path + ": truncated checkpoint");
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    if (rows * cols > (1u << 26)) throw ParseError(path + ": implausible shape for " + name);
    const auto step = get<std::uint64_t>(in, path);
    ParamId id = store.add(name, get_matrix(in, rows, cols, path));
    nn::Parameter& p = store.at(id);
    p.first_moment = get_matrix(in, rows, cols, path);
    p.second_moment = get_matrix(in, rows, cols, path);
    p.step = step;
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path + ": trailing bytes after checkpoint");
  return store;
}

void load_checkpoint(const std::string& path, ParameterStore& store) {
  ParameterStore loaded = read_checkpoint(path);
  if (loaded.size() != store.size()) {
    throw DataError(path + ": checkpoint holds " + std::to_string(loaded.size()) + " parameters, expected " +
                    std::to_string(store.size()));
  }
  for (nn::Parameter& p : store.params()) {
    if (!loaded.contains(p.name)) throw DataError(path + ": missing parameter " + p.name);
    const nn::Parameter& src = loaded.at(loaded.find(p.name));
    if (!src.value.same_shape(p.value)) {
      throw DataError(path + ": parameter " + p.name + " has shape " + nn::shape_string(src.value) + ", expected " +
                      nn::shape_string(p.value));
    }
    p.value = src.value;
    p.first_moment = src.first_moment;
    p.second_moment = src.second_moment;
    p.step = src.step;
    p.grad.fill(0.0);
  }
}

}  // namespace dhlight::rl
