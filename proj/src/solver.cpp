#include "arz/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "arz/controller.hpp"
#include "arz/errors.hpp"

namespace arz {

namespace {

constexpr double kBoundaryEps = 1e-6;  // veh/m

// Bisection on a monotone function with f(lo), f(hi) of opposite sign.
// Runs until the bracket stops shrinking.
template <typename F>
double bisect(F&& f, double lo, double hi) {
  double flo = f(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

bool brackets(double a, double b) { return (a <= 0.0 && b >= 0.0) || (a >= 0.0 && b <= 0.0); }

std::string fmt_node(const char* what, std::size_t node, double t) {
  std::ostringstream os;
  os << what << " at node " << node << ", t = " << t << " s";
  return os.str();
}

}  // namespace

std::string to_string(OutletKind kind) { return kind == OutletKind::flow ? "flow" : "velocity"; }

Grid make_grid(double L, double T, double dx, double cfl_factor, double c_max) {
  if (!(cfl_factor > 0.0 && cfl_factor <= 1.0)) throw ConfigError("cfl_factor must lie in (0, 1]");
  if (!(c_max > 0.0)) throw ConfigError("c_max must be positive");
  if (!(dx > 0.0 && L > 0.0 && T > 0.0)) throw ConfigError("L, T and dx must be positive");
  const double cells = L / dx;
  const double rounded = std::round(cells);
  if (rounded < 2.0 || std::abs(cells - rounded) > 1e-9 * cells) {
    throw ConfigError("dx does not divide L into an integer number of cells");
  }
  Grid g;
  g.L = L;
  g.T = T;
  g.M = static_cast<std::size_t>(rounded) + 1;
  g.dx = L / rounded;
  g.c_max = c_max;
  const double dt_max = cfl_factor * g.dx / c_max;
  // Steps needed so that T / steps <= dt_max; the relative slack absorbs
  // round-off when dt_max divides T exactly.
  const double steps = std::ceil(T / dt_max * (1.0 - 1e-12));
  g.N = static_cast<std::size_t>(steps) + 1;
  g.dt = T / steps;
  return g;
}

Grid default_grid(const ModelParams& params, double T) {
  return make_grid(params.L, T, 10.0, 0.8, params.v_m);
}

TrafficState uniform_state(const SteadyState& ss, const Grid& grid) {
  TrafficState s;
  s.rho.assign(grid.M, ss.rho_star);
  s.v.assign(grid.M, ss.v_star);
  return s;
}

TrafficState sinusoidal_state(const SteadyState& ss, const Grid& grid, double amplitude) {
  TrafficState s = uniform_state(ss, grid);
  for (std::size_t i = 0; i < grid.M; ++i) {
    const double phase = std::sin(3.0 * std::numbers::pi * grid.x(i) / grid.L);
    s.rho[i] = amplitude * phase * ss.rho_star + ss.rho_star;
    s.v[i] = -amplitude * phase * ss.v_star + ss.v_star;
  }
  return s;
}

ConservedState to_conserved(const TrafficState& s, const ModelParams& params) {
  ConservedState c;
  c.u1.resize(s.size());
  c.u2.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s.rho[i] > 0.0)) throw StateError(fmt_node("non-positive density", i, s.t));
    c.u1[i] = s.rho[i];
    c.u2[i] = s.rho[i] * (s.v[i] - equilibrium_velocity_unchecked(s.rho[i], params));
  }
  return c;
}

TrafficState from_conserved(const ConservedState& c, const ModelParams& params, double t) {
  TrafficState s;
  s.t = t;
  s.rho.resize(c.u1.size());
  s.v.resize(c.u1.size());
  for (std::size_t i = 0; i < c.u1.size(); ++i) {
    if (!(c.u1[i] > 0.0)) throw StateError(fmt_node("non-positive density", i, t));
    s.rho[i] = c.u1[i];
    s.v[i] = c.u2[i] / c.u1[i] + equilibrium_velocity_unchecked(c.u1[i], params);
  }
  return s;
}

FluxPair flux(const ConservedState& c, const ModelParams& params) {
  FluxPair f;
  f.f1.resize(c.u1.size());
  f.f2.resize(c.u1.size());
  for (std::size_t i = 0; i < c.u1.size(); ++i) {
    const double v = c.u2[i] / c.u1[i] + equilibrium_velocity_unchecked(c.u1[i], params);
    f.f1[i] = c.u1[i] * v;
    f.f2[i] = c.u2[i] * v;
  }
  return f;
}

FluxPair source(const ConservedState& c, const ModelParams& params) {
  FluxPair s;
  s.f1.assign(c.u1.size(), 0.0);
  s.f2.resize(c.u2.size());
  const double inv_tau = std::isfinite(params.tau) ? 1.0 / params.tau : 0.0;
  for (std::size_t i = 0; i < c.u2.size(); ++i) s.f2[i] = -c.u2[i] * inv_tau;
  return s;
}

BoundaryValues apply_boundary(const TrafficState& interior, const BoundaryCommand& cmd,
                              const ModelParams& params) {
  const std::size_t M = interior.size();
  const double t = interior.t;
  const double lo = kBoundaryEps;
  const double hi = params.rho_m - kBoundaryEps;
  auto V = [&](double rho) { return equilibrium_velocity_unchecked(rho, params); };
  BoundaryValues b;

  // Inlet: v leaves the domain along lambda2 < 0.
  {
    const double v_ext = interior.v[1];
    auto f = [&](double rho) { return rho * v_ext - cmd.inlet; };
    if (!(v_ext > 0.0) || !std::isfinite(cmd.inlet) || !brackets(f(lo), f(hi))) {
      throw BoundaryInfeasibleError("inlet flow constraint has no admissible density root", t);
    }
    b.rho_in = bisect(f, lo, hi);
    b.v_in = v_ext;
  }

  // Outlet: w = v - V(rho) leaves the domain along lambda1 = v > 0.
  {
    const double w = interior.v[M - 2] - V(interior.rho[M - 2]);
    if (cmd.outlet_kind == OutletKind::velocity) {
      const double target = cmd.outlet_value - w;
      auto g = [&](double rho) { return V(rho) - target; };
      if (!std::isfinite(cmd.outlet_value) || !brackets(g(lo), g(hi))) {
        throw BoundaryInfeasibleError("outlet velocity constraint has no admissible density root", t);
      }
      b.rho_out = bisect(g, lo, hi);
      b.v_out = cmd.outlet_value;
    } else {
      const double slope = equilibrium_velocity_slope(0.0, params);
      auto f = [&](double rho) { return rho * (w + V(rho)) - cmd.outlet_value; };
      auto df = [&](double rho) { return w + V(rho) + rho * slope; };
      // Congested branch: the part of the concave flux curve with df < 0.
      double rho_c = lo;
      if (df(lo) > 0.0) {
        if (df(hi) >= 0.0) {
          throw BoundaryInfeasibleError("outlet has no congested branch", t);
        }
        rho_c = bisect(df, lo, hi);
      }
      if (!std::isfinite(cmd.outlet_value) || !brackets(f(rho_c), f(hi))) {
        throw BoundaryInfeasibleError("outlet flow constraint has no admissible density root", t);
      }
      b.rho_out = bisect(f, rho_c, hi);
      b.v_out = w + V(b.rho_out);
    }
  }
  return b;
}

void check_admissible(const TrafficState& s, const ModelParams& params) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double rho = s.rho[i];
    const double v = s.v[i];
    if (!std::isfinite(rho) || !std::isfinite(v)) throw BlowUpError(fmt_node("non-finite state", i, s.t), i, s.t);
    if (rho <= 0.0) throw BlowUpError(fmt_node("non-positive density", i, s.t), i, s.t);
    if (rho > params.rho_m) throw BlowUpError(fmt_node("density above jam density", i, s.t), i, s.t);
    if (v < 0.0) throw BlowUpError(fmt_node("negative velocity", i, s.t), i, s.t);
  }
}

TrafficState lax_wendroff_step(const TrafficState& s, const BoundaryCommand& cmd, const Grid& grid,
                               const ModelParams& params, StepDiagnostics* diag) {
  const std::size_t M = s.size();
  if (M != grid.M) throw ConfigError("state size does not match grid");
  const double r = grid.dt / grid.dx;
  const double t_next = s.t + grid.dt;

  const ConservedState c = to_conserved(s, params);
  const FluxPair f = flux(c, params);

  ConservedState half;
  half.u1.resize(M - 1);
  half.u2.resize(M - 1);
  for (std::size_t i = 0; i + 1 < M; ++i) {
    half.u1[i] = 0.5 * (c.u1[i] + c.u1[i + 1]) - 0.5 * r * (f.f1[i + 1] - f.f1[i]);
    half.u2[i] = 0.5 * (c.u2[i] + c.u2[i + 1]) - 0.5 * r * (f.f2[i + 1] - f.f2[i]);
    if (!(half.u1[i] > 0.0) || !std::isfinite(half.u2[i])) {
      throw BlowUpError(fmt_node("inadmissible half-step state", i, s.t), i, s.t);
    }
  }
  const FluxPair fh = flux(half, params);

  const double decay = std::isfinite(params.tau) ? std::exp(-grid.dt / params.tau) : 1.0;
  TrafficState next;
  next.t = t_next;
  next.rho.resize(M);
  next.v.resize(M);
  for (std::size_t i = 1; i + 1 < M; ++i) {
    const double u1 = c.u1[i] - r * (fh.f1[i] - fh.f1[i - 1]);
    const double u2 = (c.u2[i] - r * (fh.f2[i] - fh.f2[i - 1])) * decay;
    if (!(u1 > 0.0) || !std::isfinite(u1) || !std::isfinite(u2)) {
      throw BlowUpError(fmt_node("inadmissible interior state", i, t_next), i, t_next);
    }
    next.rho[i] = u1;
    next.v[i] = u2 / u1 + equilibrium_velocity_unchecked(u1, params);
    if (next.rho[i] > params.rho_m || next.v[i] < 0.0) {
      throw BlowUpError(fmt_node("inadmissible interior state", i, t_next), i, t_next);
    }
  }

  const BoundaryValues b = apply_boundary(next, cmd, params);
  next.rho[0] = b.rho_in;
  next.v[0] = b.v_in;
  next.rho[M - 1] = b.rho_out;
  next.v[M - 1] = b.v_out;
  check_admissible(next, params);

  if (diag != nullptr) {
    diag->inlet_flux = fh.f1.front();
    diag->outlet_flux = fh.f1.back();
    const double slope = equilibrium_velocity_slope(0.0, params);
    double speed = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      speed = std::max({speed, std::abs(next.v[i]), std::abs(next.v[i] + next.rho[i] * slope)});
    }
    diag->max_wave_speed = speed;
    diag->cfl_exceeded = speed > grid.c_max;
  }
  return next;
}

Trajectory simulate(const TrafficState& init, Controller& controller, const Grid& grid,
                    const ModelParams& params) {
  if (init.size() != grid.M) throw ConfigError("initial state does not match grid");
  Trajectory traj;
  traj.grid = grid;
  traj.states.reserve(grid.N);
  traj.commands.reserve(grid.steps());
  traj.states.push_back(init);
  traj.states.back().t = 0.0;
  for (std::size_t n = 0; n < grid.steps(); ++n) {
    const TrafficState& cur = traj.states.back();
    const BoundaryCommand cmd = controller.command(cur, grid.dt);
    try {
      traj.commands.push_back(cmd);
      traj.states.push_back(lax_wendroff_step(cur, cmd, grid, params));
    } catch (const BlowUpError& e) {
      throw BlowUpError(std::string(e.what()) + " (step " + std::to_string(n) + ")", e.node(), e.time());
    } catch (const BoundaryInfeasibleError& e) {
      throw BoundaryInfeasibleError(std::string(e.what()) + " (step " + std::to_string(n) + ")", e.time());
    }
  }
  return traj;
}

}  // namespace arz
