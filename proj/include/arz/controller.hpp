#pragma once

#include <string>

#include "arz/model.hpp"
#include "arz/solver.hpp"

namespace arz {

enum class ControllerKind { setpoint, backstepping, p, pi, rl_policy };

std::string to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& name);

/// Boundary feedback law queried once per solver step with the full observed state.
class Controller {
 public:
  virtual ~Controller() = default;

  virtual ControllerKind kind() const = 0;
  virtual const SteadyState& assumed() const = 0;

  /// dt is the time until the next query; stateful laws integrate with it.
  virtual BoundaryCommand command(const TrafficState& observed, double dt) = 0;

  /// Clears internal state (integrators) before a new rollout.
  virtual void reset() {}
};

}  // namespace arz
