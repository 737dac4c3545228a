#include "arz/model.hpp"

#include <string>

#include "arz/errors.hpp"

namespace arz {

void ModelParams::validate() const {
  auto positive = [](double x) { return x > 0.0 && !std::isnan(x); };
  if (!positive(v_m) || !positive(rho_m) || !positive(tau) || !positive(L)) {
    throw ConfigError("model parameters v_m, rho_m, tau, L must be positive");
  }
}

ModelParams default_params() { return ModelParams{}; }

double equilibrium_velocity(double rho, const ModelParams& params) {
  if (!(rho >= 0.0 && rho <= params.rho_m)) {
    throw DomainError("density " + std::to_string(rho) + " outside [0, rho_m]");
  }
  return equilibrium_velocity_unchecked(rho, params);
}

double equilibrium_velocity_slope(double /*rho*/, const ModelParams& params) {
  return -params.v_m / params.rho_m;
}

SteadyState make_steady_state(double rho_star, const ModelParams& params) {
  if (!(rho_star > 0.0 && rho_star < params.rho_m)) {
    throw DomainError("steady density " + std::to_string(rho_star) + " outside (0, rho_m)");
  }
  SteadyState ss;
  ss.rho_star = rho_star;
  ss.v_star = equilibrium_velocity(rho_star, params);
  ss.q_star = rho_star * ss.v_star;
  ss.lambda1 = ss.v_star;
  ss.lambda2 = ss.v_star + rho_star * equilibrium_velocity_slope(rho_star, params);
  return ss;
}

LinearCoeffs linearize(const SteadyState& ss, const ModelParams& params) {
  if (!is_congested(ss)) {
    throw UnsupportedRegimeError("linearization requires a congested steady state (lambda2 < 0)");
  }
  LinearCoeffs lc;
  lc.ss = ss;
  lc.lambda1 = ss.lambda1;
  lc.lambda2 = ss.lambda2;
  lc.slope = equilibrium_velocity_slope(ss.rho_star, params);
  lc.tau = params.tau;
  lc.L = params.L;
  const bool relax = std::isfinite(params.tau);
  lc.coupling_scale = relax ? -1.0 / params.tau : 0.0;
  lc.decay = relax ? 1.0 / (params.tau * ss.v_star) : 0.0;
  lc.reflection = ss.lambda2 / ss.lambda1;
  return lc;
}

}  // namespace arz
