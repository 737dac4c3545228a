#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace arz {

/// Input outside the admissible domain of a model function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid configuration (grid, gains, config files, shapes).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// State conversion on an invalid state (non-positive density).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solver produced an inadmissible state. Carries the offending node and time.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(const std::string& what, std::size_t node, double t)
      : std::runtime_error(what), node_(node), t_(t) {}
  std::size_t node() const { return node_; }
  double time() const { return t_; }

 private:
  std::size_t node_;
  double t_;
};

/// The boundary closure has no admissible root in (0, rho_m).
class BoundaryInfeasibleError : public std::runtime_error {
 public:
  BoundaryInfeasibleError(const std::string& what, double t)
      : std::runtime_error(what), t_(t) {}
  double time() const { return t_; }

 private:
  double t_;
};

class UnsupportedRegimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KernelConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss, ratio or parameters during policy optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse, e.g. stepping a terminated episode.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace arz
