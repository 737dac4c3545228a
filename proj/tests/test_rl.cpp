#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>

#include "arz/errors.hpp"
#include "arz/rl/checkpoint.hpp"
#include "arz/rl/env.hpp"
#include "arz/rl/network.hpp"
#include "arz/rl/ppo.hpp"

using namespace arz;
using namespace arz::rl;

namespace {

// Max over parameters of |analytic - central difference| / max(|fd|, floor).
template <class Loss>
double fd_error(std::vector<double>& theta, const std::vector<double>& grad, Loss loss, double h = 1e-6,
                double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double keep = theta[k];
    theta[k] = keep + h;
    const double up = loss();
    theta[k] = keep - h;
    const double dn = loss();
    theta[k] = keep;
    const double fd = (up - dn) / (2 * h);
    worst = std::max(worst, std::abs(grad[k] - fd) / std::max(std::abs(fd), floor));
  }
  return worst;
}

Batch toy_batch(const Mlp& behavior, std::size_t n, std::mt19937_64& rng) {
  Batch b;
  b.obs_dim = behavior.input_size();
  b.act_dim = behavior.output_size() / 2;
  std::normal_distribution<double> n01;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> o(b.obs_dim);
    for (double& x : o) x = n01(rng);
    const PolicyOutput pol = policy_forward(behavior, o);
    const ActionSample a = sample_action(pol, rng);
    b.obs.insert(b.obs.end(), o.begin(), o.end());
    b.actions.insert(b.actions.end(), a.raw.begin(), a.raw.end());
    b.logp.push_back(a.log_prob);
    b.returns.push_back(n01(rng));
    b.adv.push_back(n01(rng));
  }
  return b;
}

Mlp toy_actor(std::mt19937_64& rng, std::size_t act = 1) {
  Mlp m({3, 6, 5, 2 * act}, rng, 0.5);
  for (std::size_t k = 0; k < act; ++k) m.params()[m.bias_offset(m.num_layers() - 1) + act + k] = -1.0;
  return m;
}

EnvConfig small_env(Scheme s = Scheme::outlet) {
  EnvConfig e;
  e.scheme = s;
  e.T = 10.0;
  e.dx = 25.0;
  return e;
}

}  // namespace

TEST_SUITE("rl") {

TEST_CASE("network forward and gradient") {
  std::mt19937_64 rng(1);
  Mlp net({4, 7, 6, 3}, rng, 0.7);
  net.set_input_normalization({0.1, -0.2, 0.3, 0.0}, {0.5, 2.0, 1.0, 0.25});
  net.set_output_scale(3.0);
  const std::vector<double> x{0.3, -1.0, 0.8, 0.1};
  const std::vector<double> w{0.4, -1.3, 2.0};
  Mlp::Tape tape;
  net.forward(x, tape);
  std::vector<double> grad(net.num_params(), 0.0);
  std::vector<std::vector<double>> scratch;
  net.backward(tape, w, grad, scratch);
  auto loss = [&] {
    const auto y = net.forward(x);
    return std::inner_product(y.begin(), y.end(), w.begin(), 0.0);
  };
  CHECK(fd_error(net.params(), grad, loss) <= 1e-4);

  Mlp zero({4, 8, 2});
  const auto y = zero.forward(x);
  CHECK(y[0] == 0.0);
  const PolicyOutput pol = policy_head(y);
  CHECK(pol.mu[0] == 0.0);
  CHECK(pol.sigma(0) == 1.0);
  CHECK(net.forward(x) == net.forward(x));
}

TEST_CASE("log sigma is clamped") {
  const PolicyOutput lo = policy_head(std::vector<double>{0.0, -10.0});
  const PolicyOutput hi = policy_head(std::vector<double>{0.0, 3.0});
  CHECK(lo.sigma(0) == doctest::Approx(kSigmaMin));
  CHECK(hi.sigma(0) == doctest::Approx(kSigmaMax));
  CHECK(lo.sigma_clamped[0]);
  CHECK_FALSE(policy_head(std::vector<double>{0.0, -1.0}).sigma_clamped[0]);
}

TEST_CASE("gaussian sampling and density") {
  PolicyOutput pol = policy_head(std::vector<double>{0.3, std::log(kSigmaMin)});
  std::mt19937_64 rng(9);
  double mean = 0.0;
  for (int k = 0; k < 10000; ++k) mean += sample_action(pol, rng).raw[0];
  mean /= 10000;
  CHECK(std::abs(mean - 0.3) <= 3 * kSigmaMin / 100);

  const PolicyOutput two = policy_head(std::vector<double>{0.1, -0.4, -1.0, -2.0});
  const double mode = log_prob(two, two.mu);
  const double expect = -(two.log_sigma[0] + two.log_sigma[1] + std::log(2 * std::numbers::pi));
  CHECK(mode == doctest::Approx(expect).epsilon(1e-14));

  std::mt19937_64 r1(4), r2(4);
  CHECK(sample_action(two, r1).raw == sample_action(two, r2).raw);

  // d log pi / d mu and d log pi / d log sigma against central differences.
  const std::vector<double> a{0.5, -0.1};
  const double h = 1e-6;
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> raw{0.1, -0.4, -1.0, -2.0};
    raw[k] += h;
    const double up = log_prob(policy_head(raw), a);
    raw[k] -= 2 * h;
    const double dn = log_prob(policy_head(raw), a);
    const double fd = (up - dn) / (2 * h);
    const std::size_t j = k % 2;
    const double z = (a[j] - two.mu[j]) / two.sigma(j);
    const double analytic = k < 2 ? z / two.sigma(j) : z * z - 1.0;
    CHECK(std::abs(analytic - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("discounted returns") {
  const std::vector<double> r{1.0, 2.0, 3.0};
  CHECK(discounted_returns(r, 0.0) == r);
  const std::vector<double> ones(10, -1.0);
  CHECK(discounted_returns(ones, 1.0)[0] == doctest::Approx(-10.0));
  CHECK(discounted_returns(std::vector<double>{1, 1, 1}, 0.99)[0] == doctest::Approx(2.9701).epsilon(1e-14));
  // Episodes do not leak into each other.
  const std::vector<char> done{0, 1, 0, 1};
  const auto R = discounted_returns(std::vector<double>{1, 1, 5, 5}, 0.5, done);
  CHECK(R[0] == doctest::Approx(1.5));
  CHECK(R[1] == doctest::Approx(1.0));
  CHECK(R[2] == doctest::Approx(7.5));
}

TEST_CASE("advantages") {
  std::mt19937_64 rng(2);
  Mlp actor = toy_actor(rng);
  Batch b = toy_batch(actor, 64, rng);

  std::vector<double> x{3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0};
  normalize(x);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  CHECK(std::abs(mean) <= 1e-10);
  CHECK(std::abs(var / x.size() - 1.0) <= 1e-6);

  Mlp zero({3, 4, 1});
  compute_advantages(b, zero);
  std::vector<double> nr = b.returns;
  normalize(nr);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.adv[i] == doctest::Approx(nr[i]).epsilon(1e-12));

  // A critic that reproduces the returns leaves zero advantage before normalization.
  Mlp critic({3, 4, 1}, rng);
  for (std::size_t i = 0; i < b.size(); ++i) b.returns[i] = critic.forward(b.ob(i))[0];
  compute_advantages(b, critic);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.returns[i] - b.values[i] == 0.0);
}

TEST_CASE("critic loss gradient") {
  std::mt19937_64 rng(3);
  Mlp actor = toy_actor(rng);
  Batch b = toy_batch(actor, 40, rng);
  Mlp critic({3, 6, 5, 1}, rng);
  critic.set_output_scale(2.0);
  const auto idx = [&] { std::vector<std::size_t> v(b.size()); std::iota(v.begin(), v.end(), 0); return v; }();
  std::vector<double> grad;
  critic_loss_grad(critic, b, idx, grad);
  std::vector<double> tmp;
  CHECK(fd_error(critic.params(), grad, [&] { return critic_loss_grad(critic, b, idx, tmp); }) <= 1e-4);

  // V == R: zero gradient and no movement.
  for (std::size_t i = 0; i < b.size(); ++i) b.returns[i] = critic.forward(b.ob(i))[0];
  const double l0 = critic_loss_grad(critic, b, idx, grad);
  CHECK(l0 == 0.0);
  for (double g : grad) CHECK(g == 0.0);
  const auto before = critic.params();
  Adam opt(critic.num_params(), 1e-3);
  opt.step(critic.params(), grad);
  CHECK(critic.params() == before);

  // Descent on a fixed buffer.
  for (std::size_t i = 0; i < b.size(); ++i) b.returns[i] = std::sin(static_cast<double>(i));
  double prev = critic_loss_grad(critic, b, idx, grad);
  for (int e = 0; e < 50; ++e) {
    opt.step(critic.params(), grad);
    const double l = critic_loss_grad(critic, b, idx, grad);
    CHECK(l <= prev);
    prev = l;
  }
}

TEST_CASE("surrogate gradient, ratio identity and clipping") {
  std::mt19937_64 rng(4);
  Mlp behavior = toy_actor(rng, 2);
  Batch b = toy_batch(behavior, 48, rng);
  const auto idx = [&] { std::vector<std::size_t> v(b.size()); std::iota(v.begin(), v.end(), 0); return v; }();
  std::vector<double> grad, tmp;

  const ActorStats same = actor_loss_grad(behavior, b, idx, 0.2, grad);
  CHECK(same.max_ratio_dev <= 1e-12);
  const double mean_adv = std::accumulate(b.adv.begin(), b.adv.end(), 0.0) / b.size();
  CHECK(-same.loss == doctest::Approx(mean_adv).epsilon(1e-12));
  CHECK(same.clip_fraction == 0.0);

  // Away from the old policy with a wide clip range: smooth objective.
  Mlp actor = behavior;
  std::normal_distribution<double> n01;
  for (double& t : actor.params()) t += 0.05 * n01(rng);
  actor_loss_grad(actor, b, idx, 10.0, grad);
  CHECK(fd_error(actor.params(), grad, [&] { return actor_loss_grad(actor, b, idx, 10.0, tmp).loss; }) <= 1e-4);

  // Samples on the flat clipped branch contribute nothing.
  Batch one = b;
  one.adv.assign(b.size(), 1.0);
  for (std::size_t i = 0; i < b.size(); ++i) one.logp[i] -= 1.0;  // r = e > 1.2
  const ActorStats clipped = actor_loss_grad(behavior, one, idx, 0.2, grad);
  CHECK(clipped.clip_fraction == 1.0);
  for (double g : grad) CHECK(g == 0.0);
  CHECK(-clipped.loss == doctest::Approx(1.2));
}

TEST_CASE("gradients do not depend on threading") {
  std::mt19937_64 rng(5);
  Mlp behavior = toy_actor(rng);
  Batch b = toy_batch(behavior, 300, rng);
  const auto idx = [&] { std::vector<std::size_t> v(b.size()); std::iota(v.begin(), v.end(), 0); return v; }();
  std::vector<double> g1, g2;
  actor_loss_grad(behavior, b, idx, 0.2, g1, false);
  actor_loss_grad(behavior, b, idx, 0.2, g2, true);
  CHECK(g1 == g2);
  Mlp critic({3, 6, 1}, rng);
  critic_loss_grad(critic, b, idx, g1, false);
  critic_loss_grad(critic, b, idx, g2, true);
  CHECK(g1 == g2);
}

TEST_CASE("environment reset") {
  EnvConfig ec;
  TrafficEnv env(ec);
  const auto obs = env.reset(0.12, 0.1);
  const Grid& g = env.grid();
  for (std::size_t i = 0; i < g.M; ++i) {
    const double s = std::sin(3 * std::numbers::pi * g.x(i) / ec.params.L);
    CHECK(env.state().rho[i] == doctest::Approx(0.1 * s * 0.12 + 0.12).epsilon(1e-14));
    CHECK(env.state().v[i] == doctest::Approx(-0.1 * s * 10.0 + 10.0).epsilon(1e-14));
  }
  CHECK(obs.size() == 2 * g.M);
  const auto flat = env.reset(0.12, 0.0);
  for (std::size_t i = 0; i < g.M; ++i) {
    CHECK(flat[i] == doctest::Approx(0.12 / 0.16));
    CHECK(flat[g.M + i] == doctest::Approx(10.0 / 40.0));
  }

  EnvConfig pk;
  pk.true_densities = {0.115, 0.120, 0.125};
  TrafficEnv penv(pk);
  std::mt19937_64 rng(6);
  std::map<double, int> counts;
  for (int k = 0; k < 3000; ++k) {
    penv.reset(rng);
    counts[penv.true_state().rho_star]++;
  }
  REQUIRE(counts.size() == 3);
  for (const auto& [rho, c] : counts) CHECK(std::abs(c / 3000.0 - 1.0 / 3.0) <= 0.03);
}

TEST_CASE("environment step contract") {
  EnvConfig ec = small_env();
  TrafficEnv env(ec);
  CHECK_THROWS_AS(env.step(std::vector<double>{0.0}), UsageError);
  env.reset(0.12, 0.0);
  const TrafficState before = env.state();
  const StepResult r = env.step(std::vector<double>{0.0});
  CHECK(r.reward == doctest::Approx(0.0).epsilon(1e-20));
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(env.state().rho[i] == doctest::Approx(before.rho[i]).epsilon(1e-14));

  const double q = env.assumed_state().q_star;
  CHECK(action_command(Scheme::outlet, std::vector<double>{1.0}, q, 10.0).outlet_value == doctest::Approx(1.5 * q));
  CHECK(action_command(Scheme::outlet, std::vector<double>{1.0}, q, 10.0).inlet == doctest::Approx(q));
  const auto both = action_command(Scheme::both, std::vector<double>{-1.0, 0.5}, q, 10.0);
  CHECK(both.inlet == doctest::Approx(0.5 * q));
  CHECK(both.outlet_value == doctest::Approx(1.25 * q));
  CHECK(action_command(Scheme::inlet, std::vector<double>{1.0}, q, 1.3).inlet == doctest::Approx(1.3));

  std::mt19937_64 rng(7);
  std::normal_distribution<double> wild(0.0, 5.0);
  const double cap = ec.params.capacity();
  for (int k = 0; k < 1000; ++k) {
    const auto c = action_command(Scheme::both, std::vector<double>{wild(rng), wild(rng)}, q, cap);
    CHECK(c.inlet >= 0.0);
    CHECK(c.inlet <= cap);
    CHECK(c.outlet_value >= 0.0);
    CHECK(c.outlet_value <= cap);
  }

  env.reset(0.12, 0.1);
  StepResult last;
  while (!env.done()) last = env.step(std::vector<double>{0.0});
  CHECK(last.done);
  CHECK(env.step_index() == env.grid().steps());
  CHECK_THROWS_AS(env.step(std::vector<double>{0.0}), UsageError);
}

TEST_CASE("blow-up ends the episode with the penalty") {
  EnvConfig ec = small_env();
  ec.T = 60.0;
  TrafficEnv env(ec);
  env.reset(0.12, 0.1);
  // Holding the outflow at half the reference jams the segment.
  const std::vector<double> u{-1.0};
  double worst = 0.0;
  std::size_t taken = 0;
  StepResult r;
  while (!env.done()) {
    r = env.step(u);
    ++taken;
    if (!r.blew_up) worst = std::min(worst, r.reward);
  }
  REQUIRE(r.blew_up);
  CHECK(r.done);
  CHECK(taken < env.grid().steps());
  CHECK(std::isfinite(r.reward));
  const double remaining = static_cast<double>(env.grid().steps() - (taken - 1));
  CHECK(r.reward <= worst * remaining);
  CHECK_THROWS_AS(env.step(u), UsageError);
}

TEST_CASE("checkpoint round trip") {
  EnvConfig ec = small_env(Scheme::both);
  PpoConfig pc;
  pc.hidden = 8;
  pc.seed = 21;
  Checkpoint ck = initial_checkpoint(ec, pc, "abc");
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  for (double& t : ck.actor.params()) t += 0.1 * n01(rng);
  const auto path = std::filesystem::temp_directory_path() / "arz_ck_roundtrip.json";
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.actor.params() == ck.actor.params());
  CHECK(back.critic.params() == ck.critic.params());
  CHECK(back.actor.input_shift() == ck.actor.input_shift());
  CHECK(back.critic.output_scale() == ck.critic.output_scale());
  CHECK(back.config_digest == "abc");
  CHECK(back.seed == 21);

  RlController a(ck, ec.params), b(back, ec.params);
  TrafficEnv env(ec);
  env.reset(0.12, 0.1);
  for (int k = 0; k < 5; ++k) {
    const auto ca = a.command(env.state(), 0.2);
    const auto cb = b.command(env.state(), 0.2);
    CHECK(ca.inlet == cb.inlet);
    CHECK(ca.outlet_value == cb.outlet_value);
    CHECK(a.command(env.state(), 0.2).inlet == ca.inlet);
    env.step(std::vector<double>{0.0, 0.0});
  }
  CHECK_THROWS_AS(check_compatible(back, Scheme::outlet, env.grid()), ConfigError);
  CHECK_THROWS_AS(checkpoint_from_json("{\"format_version\": 1}"), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("training bookkeeping and determinism") {
  EnvConfig ec = small_env();
  PpoConfig pc;
  pc.hidden = 8;
  pc.episodes = 0;
  const TrainResult none = train(ec, pc);
  CHECK(none.curve.empty());
  CHECK(none.final.actor.params() == none.initial.actor.params());

  pc.episodes = 12;
  pc.batch_episodes = 4;
  pc.epochs = 2;
  pc.minibatch = 64;
  pc.ma_window = 4;
  pc.seed = 3;
  const TrainResult a = train(ec, pc);
  const TrainResult b = train(ec, pc);
  pc.workers = 2;
  const TrainResult c = train(ec, pc);
  REQUIRE(a.curve.size() == 12);
  for (std::size_t k = 0; k < a.curve.size(); ++k) {
    CHECK(a.curve[k].cum_reward == b.curve[k].cum_reward);
    CHECK(a.curve[k].cum_reward == c.curve[k].cum_reward);
  }
  CHECK(a.final.actor.params() == b.final.actor.params());
  CHECK(a.final.actor.params() == c.final.actor.params());
  CHECK(a.final.actor.params() != a.initial.actor.params());
  CHECK_FALSE(a.diverged);
}

}  // TEST_SUITE
