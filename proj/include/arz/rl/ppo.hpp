#pragma once

// Gaussian-policy actor-critic trained with the PPO clipped surrogate.

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "arz/rl/checkpoint.hpp"
#include "arz/rl/env.hpp"
#include "arz/rl/network.hpp"

namespace arz::rl {

inline constexpr double kSigmaMin = 0.02;
inline constexpr double kSigmaMax = 1.0;

/// Actor output split into mean and clamped log standard deviation.
struct PolicyOutput {
  std::vector<double> mu;
  std::vector<double> log_sigma;    // clamped to [log sigma_min, log sigma_max]
  std::vector<char> sigma_clamped;  // no gradient flows through clamped entries
  double sigma(std::size_t k) const { return std::exp(log_sigma[k]); }
};

PolicyOutput policy_head(std::span<const double> raw);
PolicyOutput policy_forward(const Mlp& actor, std::span<const double> obs);

/// Sum over dimensions of the Gaussian log-density.
double log_prob(const PolicyOutput& pol, std::span<const double> action);

struct ActionSample {
  std::vector<double> raw;      // unclipped draw; log_prob refers to it
  std::vector<double> applied;  // clipped to [-1, 1]
  double log_prob = 0.0;
};

ActionSample sample_action(const PolicyOutput& pol, std::mt19937_64& rng);

/// R_t = r_t + gamma R_{t+1}, restarting after every done flag.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma,
                                       std::span<const char> done = {});

/// Samples of several episodes, flattened.
struct Batch {
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::vector<double> obs;      // size() x obs_dim
  std::vector<double> actions;  // size() x act_dim, unclipped
  std::vector<double> logp;     // behavior policy
  std::vector<double> rewards;
  std::vector<char> done;
  std::vector<double> returns;
  std::vector<double> values;
  std::vector<double> adv;

  std::size_t size() const { return logp.size(); }
  std::span<const double> ob(std::size_t i) const { return {obs.data() + i * obs_dim, obs_dim}; }
  std::span<const double> act(std::size_t i) const { return {actions.data() + i * act_dim, act_dim}; }
};

/// Zero mean, unit variance (eps = 1e-8) in place.
void normalize(std::vector<double>& x);

/// Fills values (critic) and adv = normalize(returns - values).
void compute_advantages(Batch& batch, const Mlp& critic, bool parallel = true);

/// mean over idx of (V(s) - R)^2; gradient written (not accumulated) into grad.
/// Work is split into fixed chunks, so serial and parallel results are identical.
double critic_loss_grad(const Mlp& critic, const Batch& batch, std::span<const std::size_t> idx,
                        std::vector<double>& grad, bool parallel = true);

struct ActorStats {
  double loss = 0.0;          // -mean(min(r A, clip(r) A))
  double max_ratio_dev = 0.0; // max |r - 1|
  double clip_fraction = 0.0; // samples with zero surrogate gradient
};

ActorStats actor_loss_grad(const Mlp& actor, const Batch& batch, std::span<const std::size_t> idx, double clip,
                           std::vector<double>& grad, bool parallel = true);

struct PpoConfig {
  std::size_t episodes = 2000;
  std::size_t batch_episodes = 8;
  std::size_t epochs = 10;
  std::size_t minibatch = 1200;  // samples per gradient step; 0 = full batch
  double clip = 0.2;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  double max_grad_norm = 0.5;
  std::size_t hidden = 64;
  double log_sigma_init = -3.0;  // initial sigma ~ 0.05
  double mu_init_scale = 0.01;   // output-layer scale of the actor
  double input_deviation = 0.1;  // relative deviation mapped to unit network input
  double value_scale = 50.0;     // critic output scale (typical |return|)
  unsigned long long seed = 1;
  int workers = 1;
  std::size_t ma_window = 20;
  bool parallel_grad = true;
};

/// K epochs of Adam over shuffled minibatches. Return the last loss.
double critic_update(Mlp& critic, Adam& opt, const Batch& batch, const PpoConfig& cfg, std::mt19937_64& rng);
/// Throws TrainingError on a non-finite ratio. Returns stats of the first
/// minibatch of the first epoch (ratio identity holds there).
ActorStats actor_update(Mlp& actor, Adam& opt, const Batch& batch, const PpoConfig& cfg, std::mt19937_64& rng);

struct CurvePoint {
  std::size_t episode = 0;
  unsigned long long seed = 0;
  double cum_reward = 0.0;
};

struct UpdateLog {
  std::size_t update = 0;
  std::size_t episodes_done = 0;
  double mean_cum_reward = 0.0;
  double moving_average = 0.0;
  double critic_loss = 0.0;
  ActorStats actor;
};

struct TrainResult {
  Checkpoint initial;
  Checkpoint best;   // best moving average of episode rewards
  Checkpoint final;  // last finite parameters
  std::vector<CurvePoint> curve;
  std::size_t best_episode = 0;
  bool diverged = false;
  std::string message;
};

Checkpoint initial_checkpoint(const EnvConfig& env, const PpoConfig& cfg, const std::string& config_digest = "");

TrainResult train(const EnvConfig& env, const PpoConfig& cfg, const std::string& config_digest = "",
                  const std::function<void(const UpdateLog&)>& progress = {});

/// Episode driven by the stochastic policy with its own RNG; appends to batch.
/// Returns the undiscounted cumulative reward.
double rollout(TrafficEnv& env, const Mlp& actor, std::mt19937_64& rng, Batch& batch);

/// Deterministic evaluation at the given true density with the evaluation
/// amplitude. Returns the cumulative reward (blow-up penalty included).
double evaluate(const Checkpoint& ck, const EnvConfig& env, double rho_true, Trajectory* traj = nullptr);

}  // namespace arz::rl
