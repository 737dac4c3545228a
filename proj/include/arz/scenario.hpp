#pragma once

// Experiment orchestration: config -> runs -> CSV/JSON artifacts.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "arz/control.hpp"
#include "arz/io.hpp"
#include "arz/metrics.hpp"
#include "arz/rl/ppo.hpp"

namespace arz {

/// Plain config text, or the config embedded in a run manifest.
Config load_config_or_manifest(const std::filesystem::path& path);

struct ScenarioConfig {
  std::string name = "run";
  ModelParams params;
  double dx = 10.0;
  double cfl = 0.8;
  double T = 240.0;
  double train_T = 0.0;  // training episode horizon; 0 = T
  double assumed_density = 0.120;            // veh/m
  std::vector<double> true_densities{0.120};  // veh/m; simulations use the first
  double amplitude = 0.1;
  ControllerKind kind = ControllerKind::setpoint;
  bool reflection_term = true;
  bool pi_tune = true;
  std::optional<PiGains> pi;
  std::string checkpoint;
  rl::Scheme scheme = rl::Scheme::outlet;
  rl::PpoConfig ppo;
  double gamma = 0.99;
  std::size_t seeds = 1;
  RewardForm reward_form = RewardForm::per_cell;
  PerfOptions perf;
  unsigned long long seed = 1;
  int workers = 1;
  std::filesystem::path out = "out";
  Config source;

  /// Reads every known key; unknown keys and invalid values are reported together.
  static ScenarioConfig from_config(const Config& cfg);
  /// Plain config file, or a run manifest (JSON with an embedded config).
  static ScenarioConfig load(const std::filesystem::path& path);

  Grid grid() const;
  SteadyState assumed() const { return make_steady_state(assumed_density, params); }
  SteadyState truth() const { return make_steady_state(true_densities.front(), params); }
  /// Training/evaluation environment (horizon train_T when set).
  rl::EnvConfig env() const;
  std::filesystem::path run_dir() const { return out / name; }
};

struct ScenarioResult {
  Trajectory traj;
  std::vector<double> rewards;
  PerfReport perf;
  std::vector<std::filesystem::path> files;
};

/// Builds the configured controller (tuning PI gains or loading a checkpoint as needed).
std::unique_ptr<Controller> build_controller(const ScenarioConfig& cfg);

ScenarioResult run_scenario(const ScenarioConfig& cfg, bool write = true);

struct TrainingSummary {
  std::vector<rl::TrainResult> runs;
  std::vector<double> eval_best;   // per seed, at the first true density
  std::vector<double> eval_final;
  std::vector<std::filesystem::path> files;
  bool diverged = false;
};

TrainingSummary run_training(const ScenarioConfig& cfg, bool write = true,
                             const std::function<void(const rl::UpdateLog&)>& progress = {});

struct ComparisonRow {
  std::string name;
  std::string kind;
  PerfReport perf;
  Improvement vs_baseline;
};

/// The first setpoint scenario (else the first scenario) is the baseline.
std::vector<ComparisonRow> run_comparison(const std::vector<ScenarioConfig>& cfgs,
                                          const std::filesystem::path& out, bool write = true);

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

/// Run manifest: config echo, digest, tool version, emitted files.
std::string manifest_json(const ScenarioConfig& cfg, const std::string& verb,
                          const std::vector<std::filesystem::path>& files);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace arz
