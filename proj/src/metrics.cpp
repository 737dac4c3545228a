#include "arz/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "arz/errors.hpp"

namespace arz {

namespace {

// Trapezoid over a uniformly sampled double array f[n][i].
double trapezoid2(const std::vector<std::vector<double>>& f, double dt, double dx) {
  double acc = 0.0;
  const std::size_t N = f.size();
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t M = f[n].size();
    double row = 0.0;
    for (std::size_t i = 0; i < M; ++i) row += (i == 0 || i + 1 == M ? 0.5 : 1.0) * f[n][i];
    acc += (N > 1 && (n == 0 || n + 1 == N) ? 0.5 : 1.0) * row;
  }
  return acc * dt * dx;
}

double normalized(const TrafficState& s, const SteadyState& ss, double dx) {
  std::vector<double> dr(s.size()), dv(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    dr[i] = s.rho[i] - ss.rho_star;
    dv[i] = s.v[i] - ss.v_star;
  }
  return normalized_l2(dr, dv, dx, ss);
}

}  // namespace

L2Norms l2_deviation(const TrafficState& s, const SteadyState& ss, double dx) {
  double r = 0.0, v = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    r += (s.rho[i] - ss.rho_star) * (s.rho[i] - ss.rho_star);
    v += (s.v[i] - ss.v_star) * (s.v[i] - ss.v_star);
  }
  return {std::sqrt(r * dx), std::sqrt(v * dx)};
}

double reward(const TrafficState& s, const SteadyState& ss, RewardForm form) {
  if (form == RewardForm::literal) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      a += (s.rho[i] - ss.rho_star) / ss.rho_star;
      b += (s.v[i] - ss.v_star) / ss.v_star;
    }
    return -(a * a) - (b * b);
  }
  double r = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double a = (s.rho[i] - ss.rho_star) / ss.rho_star;
    const double b = (s.v[i] - ss.v_star) / ss.v_star;
    r -= a * a + b * b;
  }
  return r;
}

std::vector<double> reward_series(const Trajectory& traj, const SteadyState& ss, RewardForm form) {
  std::vector<double> out;
  if (traj.states.size() < 2) return out;
  out.reserve(traj.states.size() - 1);
  for (std::size_t n = 1; n < traj.states.size(); ++n) out.push_back(reward(traj.states[n], ss, form));
  return out;
}

double cumulative(const std::vector<double>& rewards) {
  double s = 0.0;
  for (double r : rewards) s += r;
  return s;
}

std::vector<std::vector<double>> acceleration_field(const Trajectory& traj) {
  const std::size_t N = traj.states.size();
  if (N < 2) throw InsufficientDataError("acceleration needs at least two time levels");
  const std::size_t M = traj.states.front().size();
  if (M < 2) throw InsufficientDataError("acceleration needs at least two nodes");
  const double dt = traj.grid.dt;
  const double dx = traj.grid.dx;

  std::vector<std::vector<double>> a(N, std::vector<double>(M));
  for (std::size_t n = 0; n < N; ++n) {
    const auto& v = traj.states[n].v;
    for (std::size_t i = 0; i < M; ++i) {
      double vt;
      if (n == 0) {
        vt = (traj.states[1].v[i] - v[i]) / dt;
      } else if (n + 1 == N) {
        vt = (v[i] - traj.states[n - 1].v[i]) / dt;
      } else {
        vt = (traj.states[n + 1].v[i] - traj.states[n - 1].v[i]) / (2.0 * dt);
      }
      double vx;
      if (i == 0) {
        vx = (v[1] - v[0]) / dx;
      } else if (i + 1 == M) {
        vx = (v[M - 1] - v[M - 2]) / dx;
      } else {
        vx = (v[i + 1] - v[i - 1]) / (2.0 * dx);
      }
      a[n][i] = vt + v[i] * vx;
    }
  }
  return a;
}

PerfReport perf_indices(const Trajectory& traj, const SteadyState& ss, const PerfOptions& opts) {
  if (traj.states.empty()) throw InsufficientDataError("empty trajectory");
  const std::size_t N = traj.states.size();
  const std::size_t M = traj.states.front().size();
  const double dt = traj.grid.dt;
  const double dx = traj.grid.dx;

  PerfReport rep;
  std::vector<std::vector<double>> f(N, std::vector<double>(M));
  for (std::size_t n = 0; n < N; ++n) f[n] = traj.states[n].rho;
  rep.ttt = trapezoid2(f, dt, dx);

  if (N >= 2) {
    const auto a = acceleration_field(traj);
    for (std::size_t n = 0; n < N; ++n) {
      const auto& s = traj.states[n];
      for (std::size_t i = 0; i < M; ++i) {
        const double v = s.v[i];
        const double v3 = opts.fuel_cubic ? v * v * v : v;
        f[n][i] = std::max(0.0, fuel::b0 + fuel::b1 * v + fuel::b3 * v3 + fuel::b4 * v * a[n][i]) * s.rho[i];
      }
    }
    rep.fuel = trapezoid2(f, dt, dx);

    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t i = 0; i < M; ++i) {
        double at;
        if (n == 0) {
          at = (a[1][i] - a[0][i]) / dt;
        } else if (n + 1 == N) {
          at = (a[n][i] - a[n - 1][i]) / dt;
        } else {
          at = (a[n + 1][i] - a[n - 1][i]) / (2.0 * dt);
        }
        f[n][i] = (a[n][i] * a[n][i] + at * at) * traj.states[n].rho[i];
      }
    }
    rep.comfort = trapezoid2(f, dt, dx);
  }

  rep.cum_reward = cumulative(reward_series(traj, ss));

  const double initial = normalized(traj.states.front(), ss, dx);
  const double thr = opts.threshold * initial;
  std::optional<std::size_t> first;
  for (std::size_t n = N; n-- > 0;) {
    if (normalized(traj.states[n], ss, dx) <= thr) {
      first = n;
    } else {
      break;
    }
  }
  if (first) rep.time_to_threshold = traj.states[*first].t;
  return rep;
}

Improvement compare_reports(const PerfReport& candidate, const PerfReport& baseline) {
  auto pct = [](double c, double b) -> std::optional<double> {
    if (b == 0.0) return std::nullopt;
    return 100.0 * (b - c) / b;
  };
  return Improvement{pct(candidate.ttt, baseline.ttt), pct(candidate.fuel, baseline.fuel),
                     pct(candidate.comfort, baseline.comfort), pct(candidate.cum_reward, baseline.cum_reward)};
}

}  // namespace arz
