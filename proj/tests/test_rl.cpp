#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dhlight/data/flow.hpp"
#include "dhlight/error.hpp"
#include "dhlight/nn/optim.hpp"
#include "dhlight/rl/ppo.hpp"
#include "dhlight/rl/trainer.hpp"

using namespace dhlight;
using namespace dhlight::rl;
namespace fs = std::filesystem;

namespace {

// Direct double loop over the discounted sum.
std::vector<double> gae_oracle(const std::vector<double>& d, double gamma, double lambda) {
  std::vector<double> out(d.size(), 0.0);
  for (std::size_t t = 0; t < d.size(); ++t) {
    double w = 1.0;
    for (std::size_t k = t; k < d.size(); ++k) {
      out[t] += w * d[k];
      w *= gamma * lambda;
    }
  }
  return out;
}

Transition make_transition(double value, std::vector<double> rewards, bool terminal = false) {
  Transition t;
  t.obs = Matrix(2, 16);
  t.prev_obs = t.obs;
  t.actions = {0, 1};
  t.log_probs = {std::log(0.25), std::log(0.25)};
  t.rewards = std::move(rewards);
  t.value = value;
  t.terminal = terminal;
  return t;
}

}  // namespace

TEST_CASE("hyperparameter defaults and validation") {
  Hyperparameters hp;
  CHECK(hp.gamma == 0.91);
  CHECK(hp.lambda_gae == 0.86);
  CHECK(hp.clip_eps == 0.3);
  CHECK(hp.batch_size == 50);
  CHECK(hp.episodes == 100);
  CHECK(hp.buffer_capacity == 1000);
  CHECK(hp.heads == 1);
  CHECK(hp.recon_lambda == 0.001);
  CHECK(hp.gamma2 == 0.2);
  CHECK(hp.beta == 0.3);
  CHECK(hp.zeta == 0.3);
  hp.validate();
  auto bad = [](auto mutate) {
    Hyperparameters h;
    mutate(h);
    CHECK_THROWS_AS(h.validate(), ConfigError);
  };
  bad([](Hyperparameters& h) { h.gamma = 0.0; });
  bad([](Hyperparameters& h) { h.lambda_gae = 1.5; });
  bad([](Hyperparameters& h) { h.clip_eps = 0.0; });
  bad([](Hyperparameters& h) { h.beta = 1.2; });
  bad([](Hyperparameters& h) { h.buffer_capacity = 10; });
  bad([](Hyperparameters& h) { h.heads = 5; });
}

TEST_CASE("actor_forward examples") {
  std::mt19937_64 rng(1);
  nn::ParameterStore store;
  Actor actor(store, 16, 64, rng);
  std::vector<double> obs(16);
  for (std::size_t i = 0; i < 16; ++i) obs[i] = 0.3 * static_cast<double>(i);
  const auto p = actor_forward(actor, store, obs);
  REQUIRE(p.size() == 4);
  for (double x : p) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));

  // Perturb the output layer so the distribution is not uniform.
  for (double& w : store.value(store.find("actor.w3")).data()) w = std::uniform_real_distribution<double>(-1, 1)(rng);
  std::mt19937_64 noise(5);
  for (int trial = 0; trial < 100; ++trial) {
    for (double& x : obs) x = std::uniform_real_distribution<double>(0, 4)(noise);
    const auto q = actor_forward(actor, store, obs);
    double s = 0.0;
    for (double x : q) {
      CHECK(x > 0.0);
      s += x;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
    CHECK(actor_forward(actor, store, obs) == q);
  }
  const std::vector<double> short_obs(15);
  CHECK_THROWS_AS(actor_forward(actor, store, short_obs), DimensionError);
}

TEST_CASE("actor weights are reproducible from the seed") {
  std::mt19937_64 a(42), b(42);
  nn::ParameterStore sa, sb;
  Actor x(sa, 16, 64, a), y(sb, 16, 64, b);
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa.params()[i].value == sb.params()[i].value);
}

TEST_CASE("batched log-probs agree with single forwards") {
  std::mt19937_64 rng(2);
  nn::ParameterStore store;
  Actor actor(store, 16, 8, rng);
  for (double& w : store.value(store.find("actor.w3")).data()) w = std::uniform_real_distribution<double>(-1, 1)(rng);
  const Matrix obs = nn::uniform(5, 16, 0.0, 2.0, rng);
  nn::Tape tape;
  const Matrix lp = actor.log_probs(tape, store, obs).value();
  const Matrix pr = actor.probs(store, obs);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto single = actor_forward(actor, store, obs.row(i));
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(std::exp(lp(i, k)) == doctest::Approx(single[k]).epsilon(1e-12));
      CHECK(pr(i, k) == doctest::Approx(single[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("sample_action examples") {
  std::mt19937_64 rng(3);
  const std::vector<double> certain = {1.0, 0.0, 0.0, 0.0};
  for (int i = 0; i < 1000; ++i) {
    const auto s = sample_action(certain, rng);
    CHECK(s.index == 0);
    CHECK(s.log_prob == 0.0);
  }

  const std::vector<double> uniform = {0.25, 0.25, 0.25, 0.25};
  const int n = 100000;
  std::array<int, 4> counts{};
  for (int i = 0; i < n; ++i) {
    const auto s = sample_action(uniform, rng);
    ++counts[s.index];
    CHECK(s.log_prob == std::log(0.25));
  }
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  for (int c : counts) CHECK(std::abs(c / static_cast<double>(n) - 0.25) <= 3.0 * sigma);

  std::mt19937_64 a(99), b(99);
  const std::vector<double> skew = {0.1, 0.2, 0.3, 0.4};
  for (int i = 0; i < 100; ++i) CHECK(sample_action(skew, a).index == sample_action(skew, b).index);
}

TEST_CASE("td_error examples") {
  CHECK(td_error(0.0, 0.0, 0.0, 0.91, false) == 0.0);
  CHECK(td_error(1.0, 1.0, 2.0, 0.91, false) == doctest::Approx(1.82).epsilon(1e-15));
  CHECK(td_error(1.0, 1.0, 12345.0, 0.91, true) == 0.0);
}

TEST_CASE("gae examples") {
  const std::vector<double> one = {3.5};
  CHECK(gae(one, 0.91, 0.86) == std::vector<double>{3.5});
  const std::vector<double> two = {1.0, 2.0};
  const auto a = gae(two, 0.91, 0.86);
  CHECK(a[0] == doctest::Approx(1.0 + 0.91 * 0.86 * 2.0).epsilon(1e-15));
  CHECK(a[0] == doctest::Approx(2.5652).epsilon(1e-12));
  CHECK(a[1] == 2.0);
  const std::vector<double> d = {0.3, -1.0, 2.0, 0.5};
  CHECK(gae(d, 0.91, 0.0) == d);
  CHECK(gae(std::vector<double>{}, 0.91, 0.86).empty());
}

TEST_CASE("gae matches the brute-force sum on random episodes") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(1, 20);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int ep = 0; ep < 1000; ++ep) {
    std::vector<double> d(static_cast<std::size_t>(len(rng)));
    for (double& x : d) x = g(rng);
    const auto fast = gae(d, 0.91, 0.86);
    const auto slow = gae_oracle(d, 0.91, 0.86);
    for (std::size_t t = 0; t < d.size(); ++t) CHECK(std::abs(fast[t] - slow[t]) <= 1e-10);
  }
}

TEST_CASE("probability_ratio examples") {
  CHECK(probability_ratio(-1.3, -1.3) == 1.0);
  CHECK(probability_ratio(std::log(2.0) - 4.0, -4.0) == doctest::Approx(2.0).epsilon(1e-14));
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double p = u(rng), q = u(rng);
    CHECK(probability_ratio(std::log(p), std::log(q)) == doctest::Approx(p / q).epsilon(1e-12));
  }
}

TEST_CASE("ppo_clip_loss examples") {
  const double r1[] = {1.0}, a1[] = {-0.7};
  CHECK(ppo_clip_loss(r1, a1, 0.3) == doctest::Approx(0.7));
  const double r2[] = {1.5}, a2[] = {2.0};
  CHECK(ppo_clip_loss(r2, a2, 0.3) == doctest::Approx(-2.6));
  const double r3[] = {0.5}, a3[] = {-1.0};
  CHECK(ppo_clip_loss(r3, a3, 0.3) == doctest::Approx(0.7));
  const double r4[] = {1.5, 0.5}, a4[] = {2.0, -1.0};
  CHECK(ppo_clip_loss(r4, a4, 0.3) == doctest::Approx((-2.6 + 0.7) / 2.0));
}

TEST_CASE("traced clip loss value and gradients") {
  // Samples: binding clip above, binding clip below, unclipped.
  const Matrix old = Matrix::column_vector({std::log(0.2), std::log(0.4), std::log(0.3)});
  const Matrix adv = Matrix::column_vector({2.0, -1.0, 0.5});
  const Matrix fresh = Matrix::column_vector({std::log(0.3), std::log(0.2), std::log(0.33)});
  nn::Tape tape;
  Var lp = tape.variable(fresh);
  Var loss = ppo_clip_loss(lp, old, adv, 0.3);
  std::vector<double> ratios, advs;
  for (std::size_t i = 0; i < 3; ++i) {
    ratios.push_back(probability_ratio(fresh[i], old[i]));
    advs.push_back(adv[i]);
  }
  CHECK(loss.scalar() == doctest::Approx(ppo_clip_loss(ratios, advs, 0.3)).epsilon(1e-14));
  tape.backward(loss);
  CHECK(lp.grad()[0] == 0.0);
  CHECK(lp.grad()[1] == 0.0);
  CHECK(lp.grad()[2] == doctest::Approx(-ratios[2] * 0.5 / 3.0).epsilon(1e-14));
}

TEST_CASE("critic_loss examples") {
  CHECK(critic_loss(2.0, 4.0, 1.0) == 2.0);
  CHECK(critic_loss(2.0, 0.0, 0.0) == 0.0);
  CHECK(critic_loss(2.0, 4.0, 0.3) == doctest::Approx(3.4).epsilon(1e-15));
  CHECK_THROWS_AS(critic_loss(1.0, 1.0, 1.5), ConfigError);
  CHECK_THROWS_AS(critic_loss(1.0, 1.0, -0.1), ConfigError);

  nn::Tape t;
  Var v = critic_loss(t.constant(Matrix::scalar(3.0)), t.constant(Matrix::scalar(1.0)),
                      t.constant(Matrix::scalar(2.0)), 0.3);
  CHECK(v.scalar() == doctest::Approx(3.4).epsilon(1e-15));
}

TEST_CASE("rollout buffer invariants") {
  RolloutBuffer buf(3);
  buf.push(make_transition(0.0, {-1, -2}));
  buf.push(make_transition(0.5, {-1, 0}));
  buf.push(make_transition(1.0, {0, 0}, true));
  CHECK(buf.full());
  CHECK_THROWS_AS(buf.push(make_transition(0.0, {0, 0})), ConfigError);
  CHECK(buf.size() == 3);

  buf.finish_segment(0.91, 0.86, 99.0, RewardMode::kSum, 0.5);
  // Hand recursion with the global reward r = 0.5 * sum(r_i).
  const double d2 = 0.0 - 1.0;  // terminal: bootstrap masked
  const double d1 = -0.5 + 0.91 * 1.0 - 0.5;
  const double d0 = -1.5 + 0.91 * 0.5 - 0.0;
  const auto expect = gae_oracle({d0, d1, d2}, 0.91, 0.86);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(buf.items()[t].advantage == doctest::Approx(expect[t]).epsilon(1e-14));
    CHECK(buf.items()[t].target - buf.items()[t].value == doctest::Approx(buf.items()[t].advantage).epsilon(1e-14));
  }
  buf.clear();
  CHECK(buf.empty());

  Transition bad = make_transition(0.0, {0, 0});
  bad.log_probs[0] = 0.1;
  CHECK_THROWS_AS(buf.push(bad), NumericError);
}

TEST_CASE("buffer segments reset at a terminal and bootstrap otherwise") {
  RolloutBuffer a(4);
  a.push(make_transition(0.2, {-1, 0}));
  a.push(make_transition(0.1, {0, -1}));
  a.finish_segment(0.9, 0.8, 2.0, RewardMode::kMean, 1.0);
  const double d1 = -0.5 + 0.9 * 2.0 - 0.1;
  const double d0 = -0.5 + 0.9 * 0.1 - 0.2;
  CHECK(a.items()[1].advantage == doctest::Approx(d1));
  CHECK(a.items()[0].advantage == doctest::Approx(d0 + 0.72 * d1));
}

TEST_CASE("checkpoint round trip is bit exact") {
  std::mt19937_64 rng(11);
  nn::ParameterStore store;
  Actor actor(store, 16, 8, rng);
  store.add("extra", nn::uniform(3, 5, -1, 1, rng));
  for (nn::Parameter& p : store.params()) {
    for (double& g : p.grad.data()) g = std::uniform_real_distribution<double>(-1, 1)(rng);
  }
  nn::adam_step(store, 1e-3);
  nn::adam_step(store, 1e-3);
  const fs::path path = fs::temp_directory_path() / "dhlight_ckpt_test.bin";
  save_checkpoint(path.string(), store);

  const nn::ParameterStore back = read_checkpoint(path.string());
  REQUIRE(back.size() == store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& a = store.params()[i];
    const auto& b = back.params()[i];
    CHECK(a.name == b.name);
    CHECK(a.value == b.value);
    CHECK(a.first_moment == b.first_moment);
    CHECK(a.second_moment == b.second_moment);
    CHECK(a.step == b.step);
  }

  nn::ParameterStore target;
  std::mt19937_64 other(12);
  Actor actor2(target, 16, 8, other);
  target.add("extra", Matrix(3, 5));
  load_checkpoint(path.string(), target);
  for (std::size_t i = 0; i < store.size(); ++i) CHECK(target.params()[i].value == store.params()[i].value);

  nn::ParameterStore wrong;
  wrong.add("actor.w1", Matrix(2, 2));
  CHECK_THROWS_AS(load_checkpoint(path.string(), wrong), DataError);

  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "junk";
  }
  CHECK_THROWS_AS(read_checkpoint(path.string()), DataError);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(read_checkpoint(path.string()), DataError);
  fs::remove(path);
  CHECK_THROWS_AS(read_checkpoint(path.string()), DataError);
}

TEST_CASE("trainer on a small grid") {
  const auto net = sim::build_grid(2, 2);
  data::GaussianFlowConfig fc;
  fc.total = 120;
  fc.horizon = 600.0;
  const auto trips = data::bind_flow(data::gen_gaussian_flow(1, net, fc), net);
  Hyperparameters hp;
  hp.embed_dim = 8;
  hp.actor_hidden = 16;
  hp.value_hidden = 8;
  hp.buffer_capacity = 50;
  hp.batch_size = 20;
  hp.epochs = 2;
  TrainerOptions opts;
  opts.episode_seconds = 600.0;

  auto run = [&](std::uint64_t seed, std::size_t episodes) {
    sim::Simulator env(net, trips);
    Trainer trainer(env, hp, seed, opts);
    auto metrics = trainer.train(episodes);
    CHECK(env.conservation_holds());
    return std::make_pair(metrics, trainer.store().params()[0].value);
  };

  SUBCASE("zero episodes") { CHECK(run(1, 0).first.empty()); }

  SUBCASE("deterministic per seed and updates parameters") {
    const auto a = run(3, 2);
    const auto b = run(3, 2);
    REQUIRE(a.first.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
      CHECK(a.first[e].att_secs == b.first[e].att_secs);
      CHECK(a.first[e].l_recon == b.first[e].l_recon);
      CHECK(a.first[e].l_clip == b.first[e].l_clip);
      CHECK(a.first[e].episode == e);
      // 60 decisions with a 50-slot buffer: one full flush plus the tail.
      CHECK(a.first[e].updates == 2 * ((50 + 19) / 20) + 2 * ((10 + 19) / 20));
      CHECK(a.first[e].att_secs > 0.0);
      CHECK(a.first[e].mean_reward <= 0.0);
    }
    CHECK(a.second == b.second);
    const auto c = run(4, 2);
    CHECK_FALSE(c.second == a.second);
  }
}

TEST_CASE("trainer observation matrix is scaled lane counts") {
  const auto net = sim::build_grid(2, 2);
  const auto trips = data::bind_flow(data::gen_gaussian_flow(2, net), net);
  sim::Simulator env(net, trips);
  Hyperparameters hp;
  hp.embed_dim = 8;
  Trainer trainer(env, hp, 1);
  std::vector<int> phases(4, 1);
  for (int i = 0; i < 150; ++i) env.step(phases);
  const Matrix obs = trainer.observation_matrix();
  for (std::size_t a = 0; a < 4; ++a) {
    const auto raw = env.observe(a);
    for (std::size_t k = 0; k < 4; ++k) CHECK(obs(a, k) == raw[k]);
    for (std::size_t k = 4; k < 16; ++k) CHECK(obs(a, k) == doctest::Approx(raw[k] * hp.obs_scale));
  }
}
