#include "arz/rl/env.hpp"

#include <algorithm>
#include <cmath>

#include "arz/errors.hpp"

namespace arz::rl {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::outlet: return "outlet";
    case Scheme::inlet: return "inlet";
    case Scheme::both: return "both";
  }
  return "unknown";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "outlet") return Scheme::outlet;
  if (name == "inlet") return Scheme::inlet;
  if (name == "both") return Scheme::both;
  throw ConfigError("unknown scheme '" + name + "'");
}

std::size_t action_dim(Scheme s) { return s == Scheme::both ? 2 : 1; }

void EnvConfig::validate() const {
  params.validate();
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (true_densities.empty()) throw ConfigError("at least one true steady density is required");
  if (!(amplitude_min >= 0.0 && amplitude_max >= amplitude_min)) throw ConfigError("bad amplitude range");
  for (double r : true_densities) {
    if (!is_congested(make_steady_state(r, params))) throw ConfigError("true steady state must be congested");
  }
  make_steady_state(assumed_density, params);
  grid();
}

Grid EnvConfig::grid() const { return make_grid(params.L, T, dx, cfl, params.v_m); }

TrafficEnv::TrafficEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  grid_ = cfg_.grid();
  ss_assumed_ = make_steady_state(cfg_.assumed_density, cfg_.params);
  ss_true_ = make_steady_state(cfg_.true_densities.front(), cfg_.params);
}

std::vector<double> TrafficEnv::reset(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, cfg_.true_densities.size() - 1);
  const double rho = cfg_.true_densities[pick(rng)];
  std::uniform_real_distribution<double> amp(cfg_.amplitude_min, cfg_.amplitude_max);
  double a = amp(rng);
  if (std::bernoulli_distribution(0.5)(rng)) a = -a;
  return reset(rho, a);
}

std::vector<double> TrafficEnv::reset(double rho_true, double amplitude) {
  ss_true_ = make_steady_state(rho_true, cfg_.params);
  state_ = sinusoidal_state(ss_true_, grid_, amplitude);
  step_ = 0;
  done_ = false;
  worst_ = 0.0;
  return observe(state_, cfg_.params);
}

BoundaryCommand TrafficEnv::map_action(std::span<const double> raw_action) const {
  return action_command(cfg_.scheme, raw_action, ss_assumed_.q_star, cfg_.params.capacity());
}

StepResult TrafficEnv::step(std::span<const double> raw_action) {
  if (done_) throw UsageError("step on a terminated episode; call reset first");
  const BoundaryCommand cmd = map_action(raw_action);
  StepResult out;
  const std::size_t steps = grid_.steps();
  try {
    state_ = lax_wendroff_step(state_, cmd, grid_, cfg_.params);
    ++step_;
    out.reward = reward(state_, ss_true_, cfg_.reward_form);
    worst_ = std::min(worst_, out.reward);
    out.done = step_ >= steps;
  } catch (const BlowUpError&) {
    out.blew_up = true;
  } catch (const BoundaryInfeasibleError&) {
    out.blew_up = true;
  }
  if (out.blew_up) {
    // Remaining steps, this one included, at the worst reward seen so far.
    const double worst = std::min(worst_, reward(state_, ss_true_, cfg_.reward_form));
    out.reward = worst * static_cast<double>(steps - step_);
    step_ = steps;
    out.done = true;
  }
  done_ = out.done;
  out.obs = observe(state_, cfg_.params);
  return out;
}

std::vector<double> observe(const TrafficState& s, const ModelParams& params) {
  const std::size_t M = s.size();
  std::vector<double> obs(2 * M);
  for (std::size_t i = 0; i < M; ++i) {
    obs[i] = s.rho[i] / params.rho_m;
    obs[M + i] = s.v[i] / params.v_m;
  }
  return obs;
}

BoundaryCommand action_command(Scheme scheme, std::span<const double> u, double q_assumed, double q_cap) {
  if (u.size() != action_dim(scheme)) throw ConfigError("action has wrong dimension for scheme");
  auto map = [&](double a) { return std::clamp(q_assumed * (1.0 + 0.5 * std::clamp(a, -1.0, 1.0)), 0.0, q_cap); };
  BoundaryCommand cmd{q_assumed, OutletKind::flow, q_assumed};
  switch (scheme) {
    case Scheme::outlet: cmd.outlet_value = map(u[0]); break;
    case Scheme::inlet: cmd.inlet = map(u[0]); break;
    case Scheme::both:
      cmd.inlet = map(u[0]);
      cmd.outlet_value = map(u[1]);
      break;
  }
  return cmd;
}

}  // namespace arz::rl
