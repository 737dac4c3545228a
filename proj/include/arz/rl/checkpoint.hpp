#pragma once

#include <filesystem>
#include <string>

#include "arz/controller.hpp"
#include "arz/rl/env.hpp"
#include "arz/rl/network.hpp"

namespace arz::rl {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Scheme scheme = Scheme::outlet;
  double dx = 0.0, dt = 0.0, L = 0.0, T = 0.0;
  std::size_t M = 0;
  double rho_m = 0.0, v_m = 0.0;  // observation normalization
  double rho_assumed = 0.0;       // action scaling reference
  double q_assumed = 0.0, q_cap = 0.0;
  Mlp actor, critic;
  std::string config_digest;
  unsigned long long seed = 0;
};

std::string to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Deterministic evaluation-mode policy (mean action only) as a Controller.
class RlController final : public Controller {
 public:
  RlController(Checkpoint ck, const ModelParams& params);
  ControllerKind kind() const override { return ControllerKind::rl_policy; }
  const SteadyState& assumed() const override { return ss_; }
  BoundaryCommand command(const TrafficState& observed, double dt) override;
  const Checkpoint& checkpoint() const { return ck_; }

 private:
  Checkpoint ck_;
  ModelParams params_;
  SteadyState ss_;
};

/// Throws ConfigError unless the checkpoint fits `scheme` and `grid`.
void check_compatible(const Checkpoint& ck, Scheme scheme, const Grid& grid);

}  // namespace arz::rl
