#pragma once

// Stabilization reward and traffic performance indices over trajectories.

#include <optional>
#include <string>
#include <vector>

#include "arz/model.hpp"
#include "arz/solver.hpp"

namespace arz {

struct L2Norms {
  double rho = 0.0;  // veh/m * sqrt(m)
  double v = 0.0;    // m/s * sqrt(m)
};

/// (sum (.)^2 dx)^(1/2) of rho - rho* and v - v*.
L2Norms l2_deviation(const TrafficState& s, const SteadyState& ss, double dx);

enum class RewardForm {
  per_cell,  // -sum ((rho_i - rho*)/rho*)^2 - sum ((v_i - v*)/v*)^2
  literal,   // -(sum (rho_i - rho*)/rho*)^2 - (sum (v_i - v*)/v*)^2
};

double reward(const TrafficState& s, const SteadyState& ss, RewardForm form = RewardForm::per_cell);

/// Reward of every state after the initial one (one entry per step).
std::vector<double> reward_series(const Trajectory& traj, const SteadyState& ss,
                                  RewardForm form = RewardForm::per_cell);

double cumulative(const std::vector<double>& rewards);

/// a = v_t + v v_x, indexed [n][i]. Central differences inside, one-sided at the edges.
std::vector<std::vector<double>> acceleration_field(const Trajectory& traj);

struct PerfOptions {
  bool fuel_cubic = true;     // b3 multiplies v^3 (false: the printed linear form)
  double threshold = 1e-2;    // time-to-threshold, fraction of the initial L2 deviation
};

struct PerfReport {
  double ttt = 0.0;      // veh s
  double fuel = 0.0;     // l
  double comfort = 0.0;  // (m^2/s^4 + m^2/s^6) veh s
  double cum_reward = 0.0;
  std::optional<double> time_to_threshold;
};

namespace fuel {
inline constexpr double b0 = 25e-3;     // l/s
inline constexpr double b1 = 24.5e-6;   // l/m
inline constexpr double b3 = 32.5e-9;
inline constexpr double b4 = 125e-6;
}  // namespace fuel

/// Indices as double trapezoids over (x, t). `ss` is the reference for the
/// reward and the time-to-threshold.
PerfReport perf_indices(const Trajectory& traj, const SteadyState& ss, const PerfOptions& opts = {});

struct Improvement {
  std::optional<double> ttt, fuel, comfort, reward;  // percent; empty when the baseline index is 0
};

/// 100 (baseline - candidate) / baseline per index.
Improvement compare_reports(const PerfReport& candidate, const PerfReport& baseline);

}  // namespace arz
