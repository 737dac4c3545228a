#pragma once

// Nonlinear ARZ solver: two-step (Richtmyer) Lax-Wendroff in the conserved
// variables (rho, rho (v - V(rho))), relaxation applied after the hyperbolic
// step, characteristic boundary closure at both ends.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arz/model.hpp"

namespace arz {

struct Grid {
  double dx = 0.0;
  double dt = 0.0;
  std::size_t M = 0;  // spatial nodes, both boundary nodes included
  std::size_t N = 0;  // temporal nodes
  double L = 0.0;
  double T = 0.0;
  double c_max = 0.0;

  double x(std::size_t i) const { return static_cast<double>(i) * dx; }
  double t(std::size_t n) const { return static_cast<double>(n) * dt; }
  std::size_t steps() const { return N - 1; }
};

/// Largest dt <= cfl_factor * dx / c_max that divides T exactly.
Grid make_grid(double L, double T, double dx, double cfl_factor, double c_max);

/// Default grid: dx = 10 m, cfl 0.8, c_max = v_m.
Grid default_grid(const ModelParams& params, double T);

struct TrafficState {
  std::vector<double> rho;
  std::vector<double> v;
  double t = 0.0;

  std::size_t size() const { return rho.size(); }
};

struct ConservedState {
  std::vector<double> u1;  // rho
  std::vector<double> u2;  // rho (v - V(rho))
};

enum class OutletKind { flow, velocity };

struct BoundaryCommand {
  double inlet = 0.0;  // veh/s
  OutletKind outlet_kind = OutletKind::flow;
  double outlet_value = 0.0;  // veh/s or m/s
};

std::string to_string(OutletKind kind);

struct Trajectory {
  Grid grid;
  std::vector<TrafficState> states;        // N entries
  std::vector<BoundaryCommand> commands;   // N-1 entries
};

struct FluxPair {
  std::vector<double> f1;
  std::vector<double> f2;
};

TrafficState uniform_state(const SteadyState& ss, const Grid& grid);

/// Sinusoidal stop-and-go initial condition around ss:
///   rho = rho* (1 + a sin(3 pi x / L)),  v = v* (1 - a sin(3 pi x / L)).
TrafficState sinusoidal_state(const SteadyState& ss, const Grid& grid, double amplitude = 0.1);

ConservedState to_conserved(const TrafficState& s, const ModelParams& params);
TrafficState from_conserved(const ConservedState& c, const ModelParams& params, double t = 0.0);

FluxPair flux(const ConservedState& c, const ModelParams& params);
FluxPair source(const ConservedState& c, const ModelParams& params);

struct BoundaryValues {
  double rho_in = 0.0;
  double v_in = 0.0;
  double rho_out = 0.0;
  double v_out = 0.0;
};

/// Boundary closure for the congested regime. Extrapolates the outgoing
/// Riemann coordinate from the nearest interior node (v at the inlet,
/// w = v - V(rho) at the outlet) and solves the commanded constraint for rho.
BoundaryValues apply_boundary(const TrafficState& interior, const BoundaryCommand& cmd,
                              const ModelParams& params);

struct StepDiagnostics {
  double inlet_flux = 0.0;   // numerical mass flux through the first interface
  double outlet_flux = 0.0;  // numerical mass flux through the last interface
  double max_wave_speed = 0.0;
  bool cfl_exceeded = false;
};

TrafficState lax_wendroff_step(const TrafficState& s, const BoundaryCommand& cmd, const Grid& grid,
                               const ModelParams& params, StepDiagnostics* diag = nullptr);

/// Throws BlowUpError on rho <= 0, rho > rho_m, v < 0 or non-finite values.
void check_admissible(const TrafficState& s, const ModelParams& params);

class Controller;

/// Closed-loop rollout over grid.steps() steps. BlowUpError messages carry the step index.
Trajectory simulate(const TrafficState& init, Controller& controller, const Grid& grid,
                    const ModelParams& params);

// ---------------------------------------------------------------------------
// Linearized verification model.

struct LinearTrajectory {
  std::vector<double> t;
  std::vector<TrafficState> deviations;  // (rho~, v~) sampled on the controller grid
  std::vector<double> l2;                // normalized L2 deviation at each t
};

/// Normalized L2 norm sqrt(int (rho~/rho*)^2 + (v~/v*)^2 dx) on a uniform grid (trapezoid).
double normalized_l2(std::span<const double> drho, std::span<const double> dv, double dx,
                     const SteadyState& ss);

/// Advances the linear 2x2 system in Riemann coordinates by unit-Courant
/// upwinding (each family shifts one cell every P_k sub-steps with
/// |lambda_k| P_k dt = h). The controller is queried every sub-step with a
/// small-amplitude copy of the state, which linearizes any feedback law.
/// `refine` sets h = grid.dx / refine.
LinearTrajectory simulate_linear(const TrafficState& init_deviation, const LinearCoeffs& linear,
                                 Controller& controller, const Grid& grid, double T,
                                 int refine = 4);

}  // namespace arz
