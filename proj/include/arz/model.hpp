#pragma once

// ARZ model parameters, Greenshields fundamental diagram, reference states and
// the linearization used by the boundary-control designs.
//
// All quantities are SI: veh/m, m/s, veh/s, s, m.

#include <cmath>
#include <limits>

namespace arz {

struct ModelParams {
  double v_m = 40.0;     // free-flow speed (m/s)
  double rho_m = 0.160;  // jam density (veh/m)
  double tau = 60.0;     // relaxation time (s); +inf disables relaxation
  double L = 500.0;      // segment length (m)

  /// Throws ConfigError unless every field is strictly positive.
  void validate() const;

  /// Greenshields capacity v_m * rho_m / 4.
  double capacity() const { return v_m * rho_m / 4.0; }
};

/// Defaults: v_m = 40 m/s, rho_m = 160 veh/km, L = 500 m.
ModelParams default_params();

double equilibrium_velocity(double rho, const ModelParams& params);
double equilibrium_velocity_slope(double rho, const ModelParams& params);

/// V without the domain check; for solver-internal use on validated states.
inline double equilibrium_velocity_unchecked(double rho, const ModelParams& p) {
  return p.v_m * (1.0 - rho / p.rho_m);
}

struct SteadyState {
  double rho_star = 0.0;
  double v_star = 0.0;
  double q_star = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

SteadyState make_steady_state(double rho_star, const ModelParams& params);

/// Congested iff lambda2 < 0 (strict).
inline bool is_congested(const SteadyState& ss) { return ss.lambda2 < 0.0; }

/// Linearized system in Riemann coordinates around a congested steady state:
///
///   W_t + lambda1 W_x = 0
///   V_t + lambda2 V_x = coupling(x) W
///   W(0,t) = reflection * V(0,t)        (constant-flux inlet)
///
/// with W = exp(x/(tau v*)) (v~ - V'(rho*) rho~) and V = v~.
struct LinearCoeffs {
  SteadyState ss;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double slope = 0.0;           // V'(rho*)
  double tau = 0.0;
  double L = 0.0;
  double coupling_scale = 0.0;  // coupling(x) = coupling_scale * exp(-x * decay)
  double decay = 0.0;           // 1/(tau v*), zero when tau = inf
  double reflection = 0.0;      // lambda2 / lambda1

  double coupling(double x) const { return coupling_scale * std::exp(-x * decay); }
  /// exp(x/(tau v*)), the weight turning w~ into the transported coordinate.
  double weight(double x) const { return std::exp(x * decay); }
};

LinearCoeffs linearize(const SteadyState& ss, const ModelParams& params);

}  // namespace arz
