#include "arz/control.hpp"

#include <algorithm>
#include <array>
#include <tuple>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "arz/errors.hpp"

namespace arz {

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::setpoint: return "setpoint";
    case ControllerKind::backstepping: return "backstepping";
    case ControllerKind::p: return "p";
    case ControllerKind::pi: return "pi";
    case ControllerKind::rl_policy: return "rl-policy";
  }
  return "unknown";
}

ControllerKind controller_kind_from_string(const std::string& name) {
  if (name == "setpoint") return ControllerKind::setpoint;
  if (name == "backstepping") return ControllerKind::backstepping;
  if (name == "p") return ControllerKind::p;
  if (name == "pi") return ControllerKind::pi;
  if (name == "rl-policy" || name == "rl") return ControllerKind::rl_policy;
  throw ConfigError("unknown controller kind '" + name + "'");
}

double clamp_flow(double q, const ModelParams& params) { return std::clamp(q, 0.0, params.capacity()); }

// ---------------------------------------------------------------------------
// Kernels

namespace {

double trapezoid(const std::vector<double>& f, double h) {
  if (f.size() < 2) return 0.0;
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return s * h;
}

double interp_uniform(const std::vector<double>& f, double h, double x) {
  const std::size_t n = f.size() - 1;
  const double s = x / h;
  if (s <= 0.0) return f.front();
  if (s >= static_cast<double>(n)) return f.back();
  const auto j = static_cast<std::size_t>(s);
  const double th = s - static_cast<double>(j);
  return (1.0 - th) * f[j] + th * f[j + 1];
}

}  // namespace

// Kernel K(x, xi) of the transform  beta = v~ - int K W - int N v~  on the
// triangle 0 <= xi <= x <= L:
//   lambda2 K_x + lambda1 K_xi = c(xi) K(x - xi, 0),   K(x, x) = -c(x) / (lambda1 - lambda2),
//   N(x, xi) = -K(x - xi, 0).
// Along the characteristic through (z, 0) the trace f(z) = K(z, 0) solves
//   f(z) = -c(l1 z / d) / d - (1/d) int_0^z c(l1 (z - u) / d) f(u) du,   d = l1 - l2,
// which is iterated to a fixed point.
GainTable backstepping_gains(const SteadyState& ss, const ModelParams& params, const Grid& grid,
                             const KernelOptions& opts) {
  const LinearCoeffs lin = linearize(ss, params);
  const double l1 = lin.lambda1;
  const double l2 = lin.lambda2;
  const double d = l1 - l2;
  const double L = params.L;
  const std::size_t n = opts.resolution;
  const double h = L / static_cast<double>(n);

  std::vector<double> g(n + 1), f(n + 1), next(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const double z = h * static_cast<double>(i);
    g[i] = -lin.coupling(l1 * z / d) / d;
  }
  // Coupling evaluated on the lag grid: c(l1 * k h / d).
  std::vector<double> lag(n + 1);
  for (std::size_t k = 0; k <= n; ++k) lag[k] = lin.coupling(l1 * h * static_cast<double>(k) / d);

  f = g;
  int it = 0;
  for (;; ++it) {
    if (it >= opts.max_iterations) throw KernelConvergenceError("kernel iteration did not converge");
    double change = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      double acc = 0.0;
      if (i > 0) {
        acc = 0.5 * (lag[i] * f[0] + lag[0] * f[i]);
        for (std::size_t j = 1; j < i; ++j) acc += lag[i - j] * f[j];
        acc *= h;
      }
      next[i] = g[i] - acc / d;
      change = std::max(change, std::abs(next[i] - f[i]));
    }
    f.swap(next);
    if (!std::isfinite(change)) throw KernelConvergenceError("kernel iteration diverged");
    if (change <= opts.tolerance) break;
  }

  GainTable tab;
  tab.iterations = it + 1;
  tab.xi.resize(grid.M);
  tab.kernel_K.resize(grid.M);
  tab.kernel_M.resize(grid.M);
  tab.c_v.resize(grid.M);
  tab.c_q.resize(grid.M);
  // Rescaling that expresses the target v~(L) in the outlet flow.
  const double scale = -l2 / d;
  constexpr std::size_t kSub = 400;
  for (std::size_t i = 0; i < grid.M; ++i) {
    const double xi = grid.x(i);
    const double s_star = (L - xi) / d;
    const double y = L + l2 * s_star;
    double integral = 0.0;
    if (s_star > 0.0) {
      std::vector<double> vals(kSub + 1);
      const double ds = s_star / static_cast<double>(kSub);
      for (std::size_t k = 0; k <= kSub; ++k) {
        const double s = ds * static_cast<double>(k);
        const double lagz = std::max(0.0, (L - xi) - d * s);
        vals[k] = lin.coupling(xi + l1 * s) * interp_uniform(f, h, lagz);
      }
      integral = trapezoid(vals, ds);
    }
    const double K_L = -lin.coupling(y) / d - integral;
    const double N_L = -interp_uniform(f, h, L - xi);
    const double expo = lin.weight(xi);
    tab.xi[i] = xi;
    tab.kernel_K[i] = scale * K_L;
    tab.kernel_M[i] = scale * N_L;
    tab.c_v[i] = tab.kernel_M[i] + (l2 / l1) * tab.kernel_K[i] * expo;
    tab.c_q[i] = (l1 - l2) / l1 * tab.kernel_K[i] * expo;
  }
  tab.outlet_gain = opts.reflection_term ? ss.rho_star * l1 / d : 0.0;
  return tab;
}

double backstepping_deviation(std::span<const double> dv, std::span<const double> dq, double w_outlet,
                              const GainTable& table, const SteadyState& ss, double dx) {
  const std::size_t M = table.xi.size();
  if (dv.size() != M || dq.size() != M) throw ConfigError("gain table does not match observed state");
  double iv = 0.0, iq = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const double w = (i == 0 || i + 1 == M) ? 0.5 : 1.0;
    iv += w * table.c_v[i] * dv[i];
    iq += w * table.c_q[i] * dq[i];
  }
  return ss.rho_star * iv * dx + iq * dx + table.outlet_gain * w_outlet;
}

BoundaryCommand backstepping_command(const TrafficState& observed, const GainTable& table,
                                     const SteadyState& ss, const ModelParams& params, const Grid& grid) {
  const std::size_t M = observed.size();
  std::vector<double> dv(M), dq(M);
  for (std::size_t i = 0; i < M; ++i) {
    dv[i] = observed.v[i] - ss.v_star;
    dq[i] = observed.rho[i] * observed.v[i] - ss.q_star;
  }
  const double w_L = observed.v[M - 1] - equilibrium_velocity_unchecked(observed.rho[M - 1], params);
  const double dev = backstepping_deviation(dv, dq, w_L, table, ss, grid.dx);
  BoundaryCommand cmd;
  cmd.inlet = ss.q_star;
  cmd.outlet_kind = OutletKind::flow;
  cmd.outlet_value = clamp_flow(ss.q_star + dev, params);
  return cmd;
}

// ---------------------------------------------------------------------------
// Setpoint, P, PI

BoundaryCommand setpoint_command(const SteadyState& ss) {
  return BoundaryCommand{ss.q_star, OutletKind::flow, ss.q_star};
}

double p_gain(const SteadyState& ss, const ModelParams& params) {
  return ss.rho_star + ss.v_star / equilibrium_velocity_slope(ss.rho_star, params);
}

BoundaryCommand p_command(const TrafficState& observed, const SteadyState& ss, const ModelParams& params) {
  const double u = ss.q_star + p_gain(ss, params) * (observed.v.front() - ss.v_star);
  return BoundaryCommand{clamp_flow(u, params), OutletKind::flow, ss.q_star};
}

void PiGains::validate() const {
  for (double g : {kp_r, ki_r, kp_v, ki_v, windup_r, windup_v}) {
    if (!std::isfinite(g)) throw ConfigError("PI gains must be finite");
  }
  if (!(windup_r > 0.0 && windup_v > 0.0)) throw ConfigError("PI anti-windup limits must be positive");
}

PiGains default_pi_gains(const SteadyState& ss) {
  PiGains g;
  g.kp_r = -0.5 * ss.v_star;
  g.ki_r = -0.05 * ss.v_star;
  // Outlet velocity follows the inlet velocity with opposite sign: a positive
  // outlet integral closes a positive-feedback loop through the lambda2 family.
  g.kp_v = -0.5;
  g.ki_v = -0.05;
  g.windup_r = 0.5 * ss.q_star / std::abs(g.ki_r);
  g.windup_v = 0.5 * ss.v_star / std::abs(g.ki_v);
  return g;
}

BoundaryCommand pi_command(const TrafficState& observed, const PiGains& gains, const SteadyState& ss,
                           const ModelParams& params, double dt, PiIntegrators& integ) {
  const double e_r = observed.rho.back() - ss.rho_star;
  const double e_v = observed.v.front() - ss.v_star;
  const double inlet = ss.q_star + gains.kp_r * e_r + gains.ki_r * integ.I_r;
  const double outlet = ss.v_star + gains.kp_v * e_v + gains.ki_v * integ.I_v;
  integ.I_r = std::clamp(integ.I_r + dt * e_r, -gains.windup_r, gains.windup_r);
  integ.I_v = std::clamp(integ.I_v + dt * e_v, -gains.windup_v, gains.windup_v);
  return BoundaryCommand{clamp_flow(inlet, params), OutletKind::velocity, std::clamp(outlet, 0.0, params.v_m)};
}

std::unique_ptr<Controller> make_controller(ControllerKind kind, const SteadyState& assumed,
                                            const ModelParams& params, const Grid& grid,
                                            const ControllerOptions& opts) {
  switch (kind) {
    case ControllerKind::setpoint: return std::make_unique<SetpointController>(assumed);
    case ControllerKind::backstepping: {
      KernelOptions ko;
      ko.reflection_term = opts.reflection_term;
      auto table = std::make_shared<const GainTable>(backstepping_gains(assumed, params, grid, ko));
      return std::make_unique<BacksteppingController>(assumed, params, grid, std::move(table));
    }
    case ControllerKind::p: return std::make_unique<PController>(assumed, params);
    case ControllerKind::pi:
      return std::make_unique<PiController>(assumed, opts.pi.value_or(default_pi_gains(assumed)), params);
    case ControllerKind::rl_policy: break;
  }
  throw ConfigError("rl-policy controllers are built from a checkpoint");
}

// ---------------------------------------------------------------------------
// Stability checks

bool monotone_envelope(const std::vector<double>& t, const std::vector<double>& l2, double window) {
  if (t.empty() || window <= 0.0) return false;
  std::vector<double> env;
  std::size_t i = 0;
  for (double start = t.front(); i < t.size(); start += window) {
    double m = -1.0;
    while (i < t.size() && t[i] < start + window) m = std::max(m, l2[i++]);
    if (m >= 0.0) env.push_back(m);
  }
  if (env.size() < 2) return false;
  for (std::size_t k = 1; k < env.size(); ++k) {
    if (env[k] > env[k - 1]) return false;
  }
  return env.back() < env.front();
}

StabilityReport check_stabilizing(Controller& controller, const LinearCoeffs& linear, const Grid& grid,
                                  const StabilityOptions& opts) {
  const SteadyState& ss = linear.ss;
  const TrafficState init = sinusoidal_state(ss, grid, 0.1);
  TrafficState dev = init;
  for (std::size_t i = 0; i < grid.M; ++i) {
    dev.rho[i] -= ss.rho_star;
    dev.v[i] -= ss.v_star;
  }
  const LinearTrajectory lt = simulate_linear(dev, linear, controller, grid, opts.T, opts.refine);

  StabilityReport rep;
  rep.initial_l2 = lt.l2.front();
  rep.terminal_ratio = lt.l2.back() / rep.initial_l2;
  const double thr = opts.threshold * rep.initial_l2;
  std::optional<std::size_t> first_ok;
  for (std::size_t n = lt.l2.size(); n-- > 0;) {
    if (lt.l2[n] <= thr) {
      first_ok = n;
    } else {
      break;
    }
  }
  if (first_ok) rep.time_to_threshold = lt.t[*first_ok];
  rep.monotone_envelope = monotone_envelope(lt.t, lt.l2, opts.envelope_window);
  rep.finite_time_applicable = controller.kind() != ControllerKind::pi;
  if (rep.finite_time_applicable) {
    const double cmin = std::min(std::abs(linear.lambda1), std::abs(linear.lambda2));
    rep.bound = linear.L / std::abs(linear.lambda1) + linear.L / std::abs(linear.lambda2) + 2.0 * grid.dx / cmin;
    rep.passed = rep.time_to_threshold.has_value() && *rep.time_to_threshold <= rep.bound;
  } else {
    rep.passed = rep.monotone_envelope;
  }
  return rep;
}

PiTuning tune_pi(const SteadyState& ss, const ModelParams& params, const Grid& grid,
                 const StabilityOptions& opts, bool parallel) {
  const LinearCoeffs lin = linearize(ss, params);
  const PiGains base = default_pi_gains(ss);
  constexpr std::array<double, 5> mult{0.25, 0.5, 1.0, 2.0, 4.0};
  constexpr int n = 5 * 5 * 5 * 5;
  std::vector<PiGains> cand(n);
  std::vector<StabilityReport> reps(n);
  for (int c = 0; c < n; ++c) {
    PiGains g = base;
    g.kp_r *= mult[c % 5];
    g.ki_r *= mult[(c / 5) % 5];
    g.kp_v *= mult[(c / 25) % 5];
    g.ki_v *= mult[(c / 125) % 5];
    g.windup_r = 0.5 * ss.q_star / std::abs(g.ki_r);
    g.windup_v = 0.5 * ss.v_star / std::abs(g.ki_v);
    cand[c] = g;
  }
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int c = 0; c < n; ++c) {
    PiController ctl(ss, cand[c], params);
    reps[c] = check_stabilizing(ctl, lin, grid, opts);
  }
  auto score = [&](const StabilityReport& r) {
    const double reach = r.time_to_threshold.value_or(std::numeric_limits<double>::infinity());
    return std::tuple{!r.monotone_envelope, reach, r.terminal_ratio};
  };
  int best = 0;
  for (int c = 1; c < n; ++c) {
    if (score(reps[c]) < score(reps[best])) best = c;
  }
  return PiTuning{cand[best], reps[best], static_cast<std::size_t>(n)};
}

}  // namespace arz
