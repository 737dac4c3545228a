#pragma once

// Lyapunov-based boundary controllers: setpoint, outlet backstepping,
// collocated inlet P and anti-collocated PI.

#include <memory>
#include <optional>
#include <vector>

#include "arz/controller.hpp"
#include "arz/model.hpp"
#include "arz/solver.hpp"

namespace arz {

/// Backstepping gain kernels sampled on the solver grid.
///
/// The outlet law is
///   U_out = q* + rho* int c_v (v - v*) dxi + int c_q (q - q*) dxi + outlet_gain * (v - V(rho))|_L
/// The last term cancels the outgoing Riemann coordinate reflected by the flow
/// constraint at x = L. Without it (outlet_gain = 0, the default) the law is
/// the two-integral form; with it the linearized loop vanishes in finite time.
struct GainTable {
  std::vector<double> xi;
  std::vector<double> c_v;
  std::vector<double> c_q;
  std::vector<double> kernel_K;  // K(L, xi)
  std::vector<double> kernel_M;  // M(L - xi)
  double outlet_gain = 0.0;
  int iterations = 0;            // successive approximations used
};

struct KernelOptions {
  std::size_t resolution = 4000;  // intervals on [0, L] for the Volterra trace
  double tolerance = 1e-10;       // sup-norm change between iterates
  int max_iterations = 200;
  bool reflection_term = false;   // include the collocated outlet term
};

GainTable backstepping_gains(const SteadyState& ss, const ModelParams& params, const Grid& grid,
                             const KernelOptions& opts = {});

struct PiGains {
  double kp_r = 0.0;  // inlet flow per outlet density deviation (veh/s per veh/m)
  double ki_r = 0.0;  // per second
  double kp_v = 0.0;  // outlet velocity per inlet velocity deviation
  double ki_v = 0.0;  // per second
  double windup_r = 0.0;  // |I_r| limit (veh/m * s)
  double windup_v = 0.0;  // |I_v| limit (m)

  void validate() const;
};

/// Starting point of the gain search; windup limits cap each integral
/// contribution at half the reference flow / velocity.
PiGains default_pi_gains(const SteadyState& ss);

struct PiIntegrators {
  double I_r = 0.0;
  double I_v = 0.0;
};

double p_gain(const SteadyState& ss, const ModelParams& params);

BoundaryCommand setpoint_command(const SteadyState& ss);
BoundaryCommand p_command(const TrafficState& observed, const SteadyState& ss, const ModelParams& params);
BoundaryCommand pi_command(const TrafficState& observed, const PiGains& gains, const SteadyState& ss,
                           const ModelParams& params, double dt, PiIntegrators& integ);
BoundaryCommand backstepping_command(const TrafficState& observed, const GainTable& table,
                                     const SteadyState& ss, const ModelParams& params, const Grid& grid);

/// Unclamped outlet flow deviation of the backstepping law as a linear
/// functional of (v - v*, q - q*) on the grid and w at the outlet.
double backstepping_deviation(std::span<const double> dv, std::span<const double> dq, double w_outlet,
                              const GainTable& table, const SteadyState& ss, double dx);

double clamp_flow(double q, const ModelParams& params);

class SetpointController final : public Controller {
 public:
  explicit SetpointController(const SteadyState& ss) : ss_(ss) {}
  ControllerKind kind() const override { return ControllerKind::setpoint; }
  const SteadyState& assumed() const override { return ss_; }
  BoundaryCommand command(const TrafficState&, double) override { return setpoint_command(ss_); }

 private:
  SteadyState ss_;
};

class PController final : public Controller {
 public:
  PController(const SteadyState& ss, const ModelParams& params) : ss_(ss), params_(params) {}
  ControllerKind kind() const override { return ControllerKind::p; }
  const SteadyState& assumed() const override { return ss_; }
  BoundaryCommand command(const TrafficState& s, double) override { return p_command(s, ss_, params_); }

 private:
  SteadyState ss_;
  ModelParams params_;
};

class PiController final : public Controller {
 public:
  PiController(const SteadyState& ss, const PiGains& gains, const ModelParams& params)
      : ss_(ss), gains_(gains), params_(params) {
    gains_.validate();
  }
  ControllerKind kind() const override { return ControllerKind::pi; }
  const SteadyState& assumed() const override { return ss_; }
  BoundaryCommand command(const TrafficState& s, double dt) override {
    return pi_command(s, gains_, ss_, params_, dt, integ_);
  }
  void reset() override { integ_ = {}; }
  const PiIntegrators& integrators() const { return integ_; }
  const PiGains& gains() const { return gains_; }

 private:
  SteadyState ss_;
  PiGains gains_;
  ModelParams params_;
  PiIntegrators integ_;
};

class BacksteppingController final : public Controller {
 public:
  BacksteppingController(const SteadyState& ss, const ModelParams& params, const Grid& grid)
      : ss_(ss), params_(params), grid_(grid), table_(std::make_shared<GainTable>(backstepping_gains(ss, params, grid))) {}
  BacksteppingController(const SteadyState& ss, const ModelParams& params, const Grid& grid,
                         std::shared_ptr<const GainTable> table)
      : ss_(ss), params_(params), grid_(grid), table_(std::move(table)) {}
  ControllerKind kind() const override { return ControllerKind::backstepping; }
  const SteadyState& assumed() const override { return ss_; }
  BoundaryCommand command(const TrafficState& s, double) override {
    return backstepping_command(s, *table_, ss_, params_, grid_);
  }
  const GainTable& table() const { return *table_; }

 private:
  SteadyState ss_;
  ModelParams params_;
  Grid grid_;
  std::shared_ptr<const GainTable> table_;
};

struct ControllerOptions {
  std::optional<PiGains> pi;     // default_pi_gains when empty
  bool reflection_term = false;  // backstepping: add the collocated outlet term
};

/// Builds a Lyapunov-based controller designed around `assumed`.
std::unique_ptr<Controller> make_controller(ControllerKind kind, const SteadyState& assumed,
                                            const ModelParams& params, const Grid& grid,
                                            const ControllerOptions& opts = {});

struct StabilityReport {
  double initial_l2 = 0.0;
  double terminal_ratio = 0.0;
  std::optional<double> time_to_threshold;  // first t after which l2 <= threshold * initial
  double bound = 0.0;                       // finite-time bound incl. slack (0 if not applicable)
  bool finite_time_applicable = false;
  bool monotone_envelope = false;
  bool passed = false;
};

struct StabilityOptions {
  double T = 240.0;
  double threshold = 1e-3;
  double envelope_window = 20.0;  // s
  int refine = 4;
};

/// Non-increasing maxima of `l2` over consecutive windows, last below first.
bool monotone_envelope(const std::vector<double>& t, const std::vector<double>& l2, double window);

/// Runs the linear model from the sinusoidal deviation profile. Backstepping,
/// P and setpoint are judged against the finite-time bound
/// L/|lambda1| + L/|lambda2| + 2 dx / min|lambda|; PI against a monotone
/// decaying envelope.
StabilityReport check_stabilizing(Controller& controller, const LinearCoeffs& linear, const Grid& grid,
                                  const StabilityOptions& opts = {});

struct PiTuning {
  PiGains gains;
  StabilityReport report;
  std::size_t candidates = 0;
};

/// Grid search over a 5x5x5x5 log grid of multipliers around the defaults,
/// keeping the set with the earliest time-to-threshold among those with a
/// monotone envelope (terminal ratio breaks ties). `parallel` = false runs the
/// same search serially; results are identical.
PiTuning tune_pi(const SteadyState& ss, const ModelParams& params, const Grid& grid,
                 const StabilityOptions& opts = {}, bool parallel = true);

}  // namespace arz
