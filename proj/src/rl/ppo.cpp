#include "arz/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>

#include "arz/errors.hpp"

namespace arz::rl {

namespace {

constexpr std::size_t kChunks = 8;
const double kLogSigmaMin = std::log(kSigmaMin);
const double kLogSigmaMax = std::log(kSigmaMax);
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

struct Workspace {
  Mlp::Tape tape;
  std::vector<std::vector<double>> scratch;
  std::vector<double> grad;
  std::vector<double> dout;
  double max_dev = 0.0;
  double zero_grad = 0.0;
  bool bad = false;
};

// Runs body(sample, workspace) over idx split into kChunks fixed chunks and
// sums the per-chunk gradients in chunk order.
template <class Body>
std::vector<Workspace> chunked(std::span<const std::size_t> idx, std::size_t nparams, std::vector<double>& grad,
                               bool parallel, std::vector<double>& partial_loss, Body body) {
  const std::size_t n = idx.size();
  std::vector<Workspace> ws(kChunks);
  partial_loss.assign(kChunks, 0.0);
#pragma omp parallel for schedule(static, 1) if (parallel)
  for (std::size_t c = 0; c < kChunks; ++c) {
    Workspace& w = ws[c];
    w.grad.assign(nparams, 0.0);
    const std::size_t lo = c * n / kChunks, hi = (c + 1) * n / kChunks;
    for (std::size_t k = lo; k < hi; ++k) partial_loss[c] += body(idx[k], w);
  }
  grad.assign(nparams, 0.0);
  for (std::size_t c = 0; c < kChunks; ++c) {
    for (std::size_t p = 0; p < nparams; ++p) grad[p] += ws[c].grad[p];
  }
  return ws;
}

std::uint32_t seed_lo(unsigned long long s) { return static_cast<std::uint32_t>(s); }
std::uint32_t seed_hi(unsigned long long s) { return static_cast<std::uint32_t>(s >> 32); }

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// Index ranges of shuffled minibatches.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t size, std::mt19937_64& rng) {
  std::vector<std::size_t> order = iota(n);
  std::shuffle(order.begin(), order.end(), rng);
  if (size == 0 || size >= n) return {order};
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t lo = 0; lo < n; lo += size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, lo + size)));
  }
  return out;
}

Checkpoint snapshot(const Checkpoint& base, const Mlp& actor, const Mlp& critic) {
  Checkpoint ck = base;
  ck.actor = actor;
  ck.critic = critic;
  return ck;
}

}  // namespace

PolicyOutput policy_head(std::span<const double> raw) {
  if (raw.size() % 2 != 0) throw ConfigError("policy head needs (mu, log sigma) pairs");
  const std::size_t k = raw.size() / 2;
  PolicyOutput out;
  out.mu.assign(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(k));
  out.log_sigma.resize(k);
  out.sigma_clamped.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double ls = raw[k + j];
    out.log_sigma[j] = std::clamp(ls, kLogSigmaMin, kLogSigmaMax);
    out.sigma_clamped[j] = ls < kLogSigmaMin || ls > kLogSigmaMax;
  }
  return out;
}

PolicyOutput policy_forward(const Mlp& actor, std::span<const double> obs) {
  return policy_head(actor.forward(obs));
}

double log_prob(const PolicyOutput& pol, std::span<const double> action) {
  if (action.size() != pol.mu.size()) throw ConfigError("action has wrong dimension");
  double lp = 0.0;
  for (std::size_t k = 0; k < action.size(); ++k) {
    const double z = (action[k] - pol.mu[k]) / pol.sigma(k);
    lp += -0.5 * z * z - pol.log_sigma[k] - kHalfLog2Pi;
  }
  return lp;
}

ActionSample sample_action(const PolicyOutput& pol, std::mt19937_64& rng) {
  ActionSample s;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t k = 0; k < pol.mu.size(); ++k) {
    const double a = pol.mu[k] + pol.sigma(k) * n01(rng);
    s.raw.push_back(a);
    s.applied.push_back(std::clamp(a, -1.0, 1.0));
  }
  s.log_prob = log_prob(pol, s.raw);
  return s;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma, std::span<const char> done) {
  if (!done.empty() && done.size() != rewards.size()) throw ConfigError("done flags do not match rewards");
  std::vector<double> R(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    if (!done.empty() && done[t]) acc = 0.0;
    acc = rewards[t] + gamma * acc;
    R[t] = acc;
  }
  return R;
}

void normalize(std::vector<double>& x) {
  if (x.empty()) return;
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double sd = std::sqrt(var + 1e-8);
  for (double& v : x) v = (v - mean) / sd;
}

void compute_advantages(Batch& batch, const Mlp& critic, bool parallel) {
  const std::size_t n = batch.size();
  if (batch.returns.size() != n) throw ConfigError("returns must be computed before advantages");
  batch.values.assign(n, 0.0);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t i = 0; i < n; ++i) batch.values[i] = critic.forward(batch.ob(i))[0];
  batch.adv.resize(n);
  for (std::size_t i = 0; i < n; ++i) batch.adv[i] = batch.returns[i] - batch.values[i];
  normalize(batch.adv);
}

double critic_loss_grad(const Mlp& critic, const Batch& batch, std::span<const std::size_t> idx,
                        std::vector<double>& grad, bool parallel) {
  if (idx.empty()) throw ConfigError("empty minibatch");
  const double inv = 1.0 / static_cast<double>(idx.size());
  std::vector<double> partial;
  chunked(idx, critic.num_params(), grad, parallel, partial, [&](std::size_t i, Workspace& w) {
    critic.forward(batch.ob(i), w.tape);
    const double e = w.tape.act.back()[0] - batch.returns[i];
    w.dout.assign(1, 2.0 * e * inv);
    critic.backward(w.tape, w.dout, w.grad, w.scratch);
    return e * e * inv;
  });
  double loss = 0.0;
  for (double p : partial) loss += p;
  return loss;
}

ActorStats actor_loss_grad(const Mlp& actor, const Batch& batch, std::span<const std::size_t> idx, double clip,
                           std::vector<double>& grad, bool parallel) {
  if (idx.empty()) throw ConfigError("empty minibatch");
  const std::size_t A = batch.act_dim;
  const double inv = 1.0 / static_cast<double>(idx.size());
  std::vector<double> partial;
  const auto ws = chunked(idx, actor.num_params(), grad, parallel, partial, [&](std::size_t i, Workspace& w) {
    actor.forward(batch.ob(i), w.tape);
    const PolicyOutput pol = policy_head(w.tape.act.back());
    const auto a = batch.act(i);
    const double r = std::exp(log_prob(pol, a) - batch.logp[i]);
    if (!std::isfinite(r)) {
      w.bad = true;
      return 0.0;
    }
    const double adv = batch.adv[i];
    const double s = std::min(r * adv, std::clamp(r, 1.0 - clip, 1.0 + clip) * adv);
    // The clipped branch is selected and flat in theta.
    const bool zero = (adv > 0.0 && r > 1.0 + clip) || (adv < 0.0 && r < 1.0 - clip);
    w.max_dev = std::max(w.max_dev, std::abs(r - 1.0));
    if (zero) {
      w.zero_grad += 1.0;
    } else {
      const double g = -r * adv * inv;  // d loss / d log pi
      w.dout.assign(2 * A, 0.0);
      for (std::size_t k = 0; k < A; ++k) {
        const double sig = pol.sigma(k);
        const double z = (a[k] - pol.mu[k]) / sig;
        w.dout[k] = g * z / sig;
        if (!pol.sigma_clamped[k]) w.dout[A + k] = g * (z * z - 1.0);
      }
      actor.backward(w.tape, w.dout, w.grad, w.scratch);
    }
    return -s * inv;
  });
  ActorStats st;
  for (std::size_t c = 0; c < ws.size(); ++c) {
    if (ws[c].bad) throw TrainingError("non-finite probability ratio in actor update");
    st.loss += partial[c];
    st.max_ratio_dev = std::max(st.max_ratio_dev, ws[c].max_dev);
    st.clip_fraction += ws[c].zero_grad;
  }
  st.clip_fraction /= static_cast<double>(idx.size());
  return st;
}

double critic_update(Mlp& critic, Adam& opt, const Batch& batch, const PpoConfig& cfg, std::mt19937_64& rng) {
  std::vector<double> grad;
  double loss = 0.0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (const auto& mb : minibatches(batch.size(), cfg.minibatch, rng)) {
      loss = critic_loss_grad(critic, batch, mb, grad, cfg.parallel_grad);
      if (!std::isfinite(loss)) throw TrainingError("non-finite critic loss");
      clip_grad_norm(grad, cfg.max_grad_norm);
      opt.step(critic.params(), grad);
    }
  }
  return loss;
}

ActorStats actor_update(Mlp& actor, Adam& opt, const Batch& batch, const PpoConfig& cfg, std::mt19937_64& rng) {
  std::vector<double> grad;
  ActorStats first;
  bool have_first = false;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (const auto& mb : minibatches(batch.size(), cfg.minibatch, rng)) {
      const ActorStats st = actor_loss_grad(actor, batch, mb, cfg.clip, grad, cfg.parallel_grad);
      if (!have_first) {
        first = st;
        have_first = true;
      }
      clip_grad_norm(grad, cfg.max_grad_norm);
      opt.step(actor.params(), grad);
    }
  }
  return first;
}

double rollout(TrafficEnv& env, const Mlp& actor, std::mt19937_64& rng, Batch& batch) {
  std::vector<double> obs = env.reset(rng);
  batch.obs_dim = obs.size();
  batch.act_dim = action_dim(env.config().scheme);
  double cum = 0.0;
  for (;;) {
    const PolicyOutput pol = policy_forward(actor, obs);
    const ActionSample a = sample_action(pol, rng);
    batch.obs.insert(batch.obs.end(), obs.begin(), obs.end());
    batch.actions.insert(batch.actions.end(), a.raw.begin(), a.raw.end());
    batch.logp.push_back(a.log_prob);
    StepResult r = env.step(a.applied);
    batch.rewards.push_back(r.reward);
    batch.done.push_back(r.done ? 1 : 0);
    cum += r.reward;
    if (r.done) break;
    obs = std::move(r.obs);
  }
  return cum;
}

Checkpoint initial_checkpoint(const EnvConfig& env, const PpoConfig& cfg, const std::string& config_digest) {
  env.validate();
  const Grid g = env.grid();
  const std::size_t obs = 2 * g.M;
  const std::size_t act = action_dim(env.scheme);
  std::mt19937_64 rng(cfg.seed);
  Checkpoint ck;
  ck.scheme = env.scheme;
  ck.dx = g.dx;
  ck.dt = g.dt;
  ck.M = g.M;
  ck.L = g.L;
  ck.T = g.T;
  ck.rho_m = env.params.rho_m;
  ck.v_m = env.params.v_m;
  ck.rho_assumed = env.assumed_density;
  ck.q_assumed = make_steady_state(env.assumed_density, env.params).q_star;
  ck.q_cap = env.params.capacity();
  ck.actor = Mlp({obs, cfg.hidden, cfg.hidden, 2 * act}, rng, cfg.mu_init_scale);
  for (std::size_t k = 0; k < act; ++k) {
    ck.actor.params()[ck.actor.bias_offset(ck.actor.num_layers() - 1) + act + k] = cfg.log_sigma_init;
  }
  ck.critic = Mlp({obs, cfg.hidden, cfg.hidden, 1}, rng, 1.0);
  // Inputs are standardized around the assumed steady state: a relative
  // deviation of input_deviation maps to one unit.
  const SteadyState ss = make_steady_state(env.assumed_density, env.params);
  std::vector<double> shift(obs), scale(obs);
  for (std::size_t i = 0; i < g.M; ++i) {
    shift[i] = ss.rho_star / env.params.rho_m;
    shift[g.M + i] = ss.v_star / env.params.v_m;
    scale[i] = cfg.input_deviation * shift[i];
    scale[g.M + i] = cfg.input_deviation * shift[g.M + i];
  }
  ck.actor.set_input_normalization(shift, scale);
  ck.critic.set_input_normalization(shift, scale);
  ck.critic.set_output_scale(cfg.value_scale);
  ck.config_digest = config_digest;
  ck.seed = cfg.seed;
  return ck;
}

TrainResult train(const EnvConfig& env, const PpoConfig& cfg, const std::string& config_digest,
                  const std::function<void(const UpdateLog&)>& progress) {
  if (cfg.batch_episodes == 0 || cfg.epochs == 0) throw ConfigError("batch_episodes and epochs must be positive");
  if (!(cfg.clip > 0.0 && cfg.actor_lr > 0.0 && cfg.critic_lr > 0.0)) throw ConfigError("clip and learning rates must be positive");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");

  TrainResult res;
  res.initial = initial_checkpoint(env, cfg, config_digest);
  res.best = res.initial;
  res.final = res.initial;
  Mlp actor = res.initial.actor;
  Mlp critic = res.initial.critic;
  Adam aopt(actor.num_params(), cfg.actor_lr);
  Adam copt(critic.num_params(), cfg.critic_lr);
  std::seed_seq master_seed{seed_lo(cfg.seed), seed_hi(cfg.seed), 0x5eedU};
  std::mt19937_64 master(master_seed);

  double best_ma = -std::numeric_limits<double>::infinity();
  std::size_t done = 0;
  for (std::size_t update = 0; done < cfg.episodes; ++update) {
    const std::size_t nb = std::min(cfg.batch_episodes, cfg.episodes - done);
    std::vector<Batch> parts(nb);
    std::vector<double> cums(nb);
    // Each episode owns its RNG stream, so results do not depend on the worker count.
#pragma omp parallel for schedule(dynamic) num_threads(cfg.workers) if (cfg.workers > 1)
    for (std::size_t j = 0; j < nb; ++j) {
      std::seed_seq ss{seed_lo(cfg.seed), seed_hi(cfg.seed), static_cast<std::uint32_t>(done + j)};
      std::mt19937_64 rng(ss);
      TrafficEnv e(env);
      cums[j] = rollout(e, actor, rng, parts[j]);
    }

    Batch batch;
    batch.obs_dim = parts.front().obs_dim;
    batch.act_dim = parts.front().act_dim;
    for (auto& p : parts) {
      batch.obs.insert(batch.obs.end(), p.obs.begin(), p.obs.end());
      batch.actions.insert(batch.actions.end(), p.actions.begin(), p.actions.end());
      batch.logp.insert(batch.logp.end(), p.logp.begin(), p.logp.end());
      batch.rewards.insert(batch.rewards.end(), p.rewards.begin(), p.rewards.end());
      batch.done.insert(batch.done.end(), p.done.begin(), p.done.end());
    }
    batch.returns = discounted_returns(batch.rewards, env.gamma, batch.done);

    for (std::size_t j = 0; j < nb; ++j) res.curve.push_back({done + j, cfg.seed, cums[j]});
    done += nb;

    const std::size_t w = std::min(cfg.ma_window, res.curve.size());
    double ma = 0.0;
    for (std::size_t k = res.curve.size() - w; k < res.curve.size(); ++k) ma += res.curve[k].cum_reward;
    ma /= static_cast<double>(w);
    // The policy that produced these episodes is the one before this update.
    if (res.curve.size() >= cfg.ma_window && ma > best_ma) {
      best_ma = ma;
      res.best = snapshot(res.initial, actor, critic);
      res.best_episode = done;
    }

    UpdateLog log;
    try {
      compute_advantages(batch, critic, cfg.parallel_grad);
      log.actor = actor_update(actor, aopt, batch, cfg, master);
      log.critic_loss = critic_update(critic, copt, batch, cfg, master);
    } catch (const TrainingError& e) {
      res.diverged = true;
      res.message = e.what();
      return res;
    }
    if (!actor.finite() || !critic.finite()) {
      res.diverged = true;
      res.message = "non-finite network parameters after update " + std::to_string(update);
      return res;
    }
    res.final = snapshot(res.initial, actor, critic);

    if (progress) {
      log.update = update;
      log.episodes_done = done;
      log.mean_cum_reward = std::accumulate(cums.begin(), cums.end(), 0.0) / static_cast<double>(nb);
      log.moving_average = ma;
      progress(log);
    }
  }
  if (res.best_episode == 0) res.best = res.final;
  return res;
}

double evaluate(const Checkpoint& ck, const EnvConfig& env, double rho_true, Trajectory* traj) {
  TrafficEnv e(env);
  check_compatible(ck, env.scheme, e.grid());
  std::vector<double> obs = e.reset(rho_true, env.eval_amplitude);
  if (traj != nullptr) {
    traj->grid = e.grid();
    traj->states.assign(1, e.state());
    traj->commands.clear();
  }
  double cum = 0.0;
  for (;;) {
    const PolicyOutput pol = policy_forward(ck.actor, obs);
    std::vector<double> u(pol.mu.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = std::clamp(pol.mu[k], -1.0, 1.0);
    if (traj != nullptr) traj->commands.push_back(e.map_action(u));
    StepResult r = e.step(u);
    cum += r.reward;
    if (traj != nullptr && !r.blew_up) traj->states.push_back(e.state());
    if (r.done) break;
    obs = std::move(r.obs);
  }
  return cum;
}

}  // namespace arz::rl
