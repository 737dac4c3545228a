#pragma once

// The solver as an episodic MDP: observation = (rho / rho_m, v / v_m) per
// node, action = normalized boundary flow(s), reward from metrics::reward.

#include <random>
#include <span>
#include <string>
#include <vector>

#include "arz/metrics.hpp"
#include "arz/model.hpp"
#include "arz/solver.hpp"

namespace arz::rl {

enum class Scheme { outlet, inlet, both };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);
/// Actuated boundaries: 1 for outlet/inlet, 2 for both (inlet first).
std::size_t action_dim(Scheme s);

struct EnvConfig {
  Scheme scheme = Scheme::outlet;
  ModelParams params;
  double T = 240.0;
  double dx = 10.0;
  double cfl = 0.8;
  std::vector<double> true_densities{0.120};  // veh/m; one entry = full knowledge
  double assumed_density = 0.120;             // veh/m, scales actions
  double gamma = 0.99;
  double amplitude_min = 0.05;                // training draws
  double amplitude_max = 0.15;
  double eval_amplitude = 0.1;
  RewardForm reward_form = RewardForm::per_cell;

  void validate() const;
  Grid grid() const;
};

struct StepResult {
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;
  bool blew_up = false;
};

class TrafficEnv {
 public:
  explicit TrafficEnv(EnvConfig cfg);

  /// Training reset: rho* drawn uniformly from the configured set, amplitude
  /// from [amplitude_min, amplitude_max], sign flipped with probability 1/2.
  std::vector<double> reset(std::mt19937_64& rng);
  /// Reset to a given true density and signed amplitude.
  std::vector<double> reset(double rho_true, double amplitude);

  StepResult step(std::span<const double> raw_action);

  BoundaryCommand map_action(std::span<const double> raw_action) const;

  const EnvConfig& config() const { return cfg_; }
  const Grid& grid() const { return grid_; }
  const TrafficState& state() const { return state_; }
  const SteadyState& true_state() const { return ss_true_; }
  const SteadyState& assumed_state() const { return ss_assumed_; }
  std::size_t step_index() const { return step_; }
  bool done() const { return done_; }

 private:
  EnvConfig cfg_;
  Grid grid_;
  SteadyState ss_assumed_;
  SteadyState ss_true_;
  TrafficState state_;
  std::size_t step_ = 0;
  bool done_ = true;
  double worst_ = 0.0;
};

/// (rho_i / rho_m ..., v_i / v_m ...).
std::vector<double> observe(const TrafficState& s, const ModelParams& params);

/// Affine action map q = q_assumed (1 + u / 2) clamped to [0, q_cap], per actuated
/// boundary; the other boundary holds q_assumed.
BoundaryCommand action_command(Scheme scheme, std::span<const double> u, double q_assumed, double q_cap);

}  // namespace arz::rl
