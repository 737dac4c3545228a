#include "arz/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "arz/errors.hpp"

namespace arz {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "scenario.name", "scenario.assumed_density_veh_per_km", "scenario.true_density_veh_per_km",
      "scenario.amplitude", "model.v_m_mps", "model.rho_m_veh_per_km", "model.tau_s", "model.length_m",
      "grid.dx_m", "grid.cfl", "run.horizon_s", "run.seed", "run.workers", "run.out",
      "controller.kind", "controller.reflection_term", "controller.pi_tune", "controller.pi.kp_r",
      "controller.pi.ki_r", "controller.pi.kp_v", "controller.pi.ki_v", "controller.pi.windup_r",
      "controller.pi.windup_v", "controller.checkpoint", "controller.scheme", "rl.episodes", "rl.horizon_s",
      "rl.batch_episodes", "rl.epochs", "rl.minibatch", "rl.clip", "rl.actor_lr", "rl.critic_lr", "rl.gamma",
      "rl.hidden", "rl.seeds", "rl.max_grad_norm", "rl.log_sigma_init", "rl.input_deviation", "rl.value_scale", "rl.ma_window", "reward.form",
      "metrics.fuel_cubic", "metrics.threshold"};
  return keys;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ScenarioConfig ScenarioConfig::from_config(const Config& c) {
  std::vector<std::string> errors;
  for (const auto& [k, v] : c.values()) {
    if (!known_keys().count(k)) errors.push_back("unknown key '" + k + "'");
  }
  ScenarioConfig s;
  s.source = c;
  auto guard = [&](auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors.emplace_back(e.what());
    }
  };
  guard([&] { s.name = c.get_string("scenario.name", s.name); });
  guard([&] { s.params.v_m = c.get_double("model.v_m_mps", s.params.v_m); });
  guard([&] { s.params.rho_m = c.get_double("model.rho_m_veh_per_km", s.params.rho_m * 1000.0) / 1000.0; });
  guard([&] { s.params.tau = c.get_double("model.tau_s", s.params.tau); });
  guard([&] { s.params.L = c.get_double("model.length_m", s.params.L); });
  guard([&] { s.params.validate(); });
  guard([&] { s.dx = c.get_double("grid.dx_m", s.dx); });
  guard([&] { s.cfl = c.get_double("grid.cfl", s.cfl); });
  guard([&] { s.T = c.get_double("run.horizon_s", s.T); });
  guard([&] { s.assumed_density = c.get_double("scenario.assumed_density_veh_per_km", 120.0) / 1000.0; });
  guard([&] {
    s.true_densities = c.get_list("scenario.true_density_veh_per_km", {s.assumed_density * 1000.0});
    for (double& r : s.true_densities) r /= 1000.0;
  });
  guard([&] { s.amplitude = c.get_double("scenario.amplitude", s.amplitude); });
  guard([&] { s.kind = controller_kind_from_string(c.get_string("controller.kind", "setpoint")); });
  guard([&] { s.reflection_term = c.get_bool("controller.reflection_term", s.reflection_term); });
  guard([&] { s.pi_tune = c.get_bool("controller.pi_tune", s.pi_tune); });
  guard([&] {
    if (c.has("controller.pi.kp_r") || c.has("controller.pi.ki_r") || c.has("controller.pi.kp_v") ||
        c.has("controller.pi.ki_v")) {
      PiGains g = default_pi_gains(make_steady_state(s.assumed_density, s.params));
      g.kp_r = c.get_double("controller.pi.kp_r", g.kp_r);
      g.ki_r = c.get_double("controller.pi.ki_r", g.ki_r);
      g.kp_v = c.get_double("controller.pi.kp_v", g.kp_v);
      g.ki_v = c.get_double("controller.pi.ki_v", g.ki_v);
      g.windup_r = c.get_double("controller.pi.windup_r", g.windup_r);
      g.windup_v = c.get_double("controller.pi.windup_v", g.windup_v);
      g.validate();
      s.pi = g;
      s.pi_tune = false;
    }
  });
  guard([&] { s.checkpoint = c.get_string("controller.checkpoint", ""); });
  guard([&] { s.scheme = rl::scheme_from_string(c.get_string("controller.scheme", "outlet")); });
  guard([&] { s.train_T = c.get_double("rl.horizon_s", s.train_T); });
  guard([&] { s.ppo.episodes = static_cast<std::size_t>(c.get_int("rl.episodes", static_cast<long>(s.ppo.episodes))); });
  guard([&] { s.ppo.batch_episodes = static_cast<std::size_t>(c.get_int("rl.batch_episodes", static_cast<long>(s.ppo.batch_episodes))); });
  guard([&] { s.ppo.epochs = static_cast<std::size_t>(c.get_int("rl.epochs", static_cast<long>(s.ppo.epochs))); });
  guard([&] { s.ppo.minibatch = static_cast<std::size_t>(c.get_int("rl.minibatch", static_cast<long>(s.ppo.minibatch))); });
  guard([&] { s.ppo.hidden = static_cast<std::size_t>(c.get_int("rl.hidden", static_cast<long>(s.ppo.hidden))); });
  guard([&] { s.ppo.ma_window = static_cast<std::size_t>(c.get_int("rl.ma_window", static_cast<long>(s.ppo.ma_window))); });
  guard([&] { s.ppo.clip = c.get_double("rl.clip", s.ppo.clip); });
  guard([&] { s.ppo.actor_lr = c.get_double("rl.actor_lr", s.ppo.actor_lr); });
  guard([&] { s.ppo.critic_lr = c.get_double("rl.critic_lr", s.ppo.critic_lr); });
  guard([&] { s.ppo.max_grad_norm = c.get_double("rl.max_grad_norm", s.ppo.max_grad_norm); });
  guard([&] { s.ppo.log_sigma_init = c.get_double("rl.log_sigma_init", s.ppo.log_sigma_init); });
  guard([&] { s.gamma = c.get_double("rl.gamma", s.gamma); });
  guard([&] { s.seeds = static_cast<std::size_t>(c.get_int("rl.seeds", static_cast<long>(s.seeds))); });
  guard([&] {
    const std::string f = c.get_string("reward.form", "per_cell");
    if (f == "per_cell") {
      s.reward_form = RewardForm::per_cell;
    } else if (f == "literal") {
      s.reward_form = RewardForm::literal;
    } else {
      throw ConfigError("reward.form must be per_cell or literal");
    }
  });
  guard([&] { s.perf.fuel_cubic = c.get_bool("metrics.fuel_cubic", s.perf.fuel_cubic); });
  guard([&] { s.perf.threshold = c.get_double("metrics.threshold", s.perf.threshold); });
  guard([&] { s.seed = static_cast<unsigned long long>(c.get_int("run.seed", static_cast<long>(s.seed))); });
  guard([&] { s.workers = static_cast<int>(c.get_int("run.workers", s.workers)); });
  guard([&] { s.out = c.get_string("run.out", s.out.string()); });

  if (errors.empty()) {
    guard([&] { s.grid(); });
    guard([&] { s.env().validate(); });
    guard([&] {
      if (!is_congested(s.assumed())) throw ConfigError("assumed steady state must be congested");
    });
    if (s.workers < 1) errors.emplace_back("run.workers must be >= 1");
    if (s.seeds < 1) errors.emplace_back("rl.seeds must be >= 1");
    if (s.amplitude < 0.0 || s.amplitude >= 1.0) errors.emplace_back("scenario.amplitude must lie in [0, 1)");
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  s.ppo.seed = s.seed;
  s.ppo.workers = s.workers;
  return s;
}

Config load_config_or_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      const auto j = nlohmann::json::parse(text);
      return Config::parse(j.at("config").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("manifest " + path.string() + ": " + e.what());
    }
  }
  return Config::parse(text);
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  return from_config(load_config_or_manifest(path));
}

Grid ScenarioConfig::grid() const { return make_grid(params.L, T, dx, cfl, params.v_m); }

rl::EnvConfig ScenarioConfig::env() const {
  rl::EnvConfig e;
  e.scheme = scheme;
  e.params = params;
  e.T = train_T > 0.0 ? train_T : T;
  e.dx = dx;
  e.cfl = cfl;
  e.true_densities = true_densities;
  e.assumed_density = assumed_density;
  e.gamma = gamma;
  e.eval_amplitude = amplitude;
  e.reward_form = reward_form;
  return e;
}

std::unique_ptr<Controller> build_controller(const ScenarioConfig& cfg) {
  const Grid grid = cfg.grid();
  const SteadyState as = cfg.assumed();
  if (cfg.kind == ControllerKind::rl_policy) {
    if (cfg.checkpoint.empty()) throw ConfigError("controller.checkpoint is required for rl-policy");
    if (!std::filesystem::exists(cfg.checkpoint)) {
      throw ConfigError("checkpoint file '" + cfg.checkpoint + "' does not exist");
    }
    rl::Checkpoint ck = rl::load_checkpoint(cfg.checkpoint);
    rl::check_compatible(ck, cfg.scheme, grid);
    return std::make_unique<rl::RlController>(std::move(ck), cfg.params);
  }
  ControllerOptions opts;
  opts.reflection_term = cfg.reflection_term;
  if (cfg.kind == ControllerKind::pi) {
    if (cfg.pi) {
      opts.pi = cfg.pi;
    } else if (cfg.pi_tune) {
      StabilityOptions so;
      so.refine = 2;
      opts.pi = tune_pi(as, cfg.params, grid, so).gains;
    }
  }
  return make_controller(cfg.kind, as, cfg.params, grid, opts);
}

std::string manifest_json(const ScenarioConfig& cfg, const std::string& verb,
                          const std::vector<std::filesystem::path>& files) {
  nlohmann::json j;
  j["tool"] = "arzctl";
  j["version"] = kVersion;
  j["verb"] = verb;
  j["name"] = cfg.name;
  j["config"] = cfg.source.dump();
  j["config_digest"] = digest(cfg.source.dump());
  j["seed"] = cfg.seed;
  std::vector<std::string> names;
  for (const auto& f : files) names.push_back(f.filename().string());
  j["files"] = names;
  return j.dump(1);
}

ScenarioResult run_scenario(const ScenarioConfig& cfg, bool write) {
  const Grid grid = cfg.grid();
  auto controller = build_controller(cfg);
  const SteadyState truth = cfg.truth();
  ScenarioResult res;
  res.traj = simulate(sinusoidal_state(truth, grid, cfg.amplitude), *controller, grid, cfg.params);
  res.rewards = reward_series(res.traj, truth, cfg.reward_form);
  res.perf = perf_indices(res.traj, truth, cfg.perf);
  res.perf.cum_reward = cumulative(res.rewards);
  if (write) {
    const auto dir = cfg.run_dir();
    auto emit = [&](const std::string& name, const std::string& text) {
      write_atomic(dir / name, text);
      res.files.push_back(dir / name);
    };
    emit("trajectory.csv", trajectory_csv(res.traj));
    emit("commands.csv", commands_csv(res.traj));
    emit("rewards.csv", rewards_csv(res.traj, res.rewards));
    nlohmann::json p;
    p["J_TTT_veh_s"] = res.perf.ttt;
    p["J_fuel_l"] = res.perf.fuel;
    p["J_comfort"] = res.perf.comfort;
    p["cum_reward"] = res.perf.cum_reward;
    p["time_to_threshold_s"] = res.perf.time_to_threshold ? nlohmann::json(*res.perf.time_to_threshold) : nlohmann::json();
    emit("perf.json", p.dump(1));
    emit("manifest.json", manifest_json(cfg, "simulate", res.files));
  }
  return res;
}

TrainingSummary run_training(const ScenarioConfig& cfg, bool write,
                             const std::function<void(const rl::UpdateLog&)>& progress) {
  const rl::EnvConfig env = cfg.env();
  const std::string dig = digest(cfg.source.dump());
  TrainingSummary sum;
  std::string curve = "episode,seed,cum_reward\n";
  for (std::size_t k = 0; k < cfg.seeds; ++k) {
    rl::PpoConfig ppo = cfg.ppo;
    ppo.seed = cfg.seed + k;
    rl::TrainResult r = rl::train(env, ppo, dig, progress);
    for (const auto& c : r.curve) curve += std::to_string(c.episode) + ',' + std::to_string(c.seed) + ',' + fmt(c.cum_reward) + '\n';
    if (!r.diverged) {
      sum.eval_best.push_back(rl::evaluate(r.best, env, env.true_densities.front()));
      sum.eval_final.push_back(rl::evaluate(r.final, env, env.true_densities.front()));
    }
    if (write) {
      const auto dir = cfg.run_dir() / ("seed_" + std::to_string(ppo.seed));
      rl::save_checkpoint(r.best, dir / "best.json");
      rl::save_checkpoint(r.final, dir / "final.json");
      sum.files.push_back(dir / "best.json");
      sum.files.push_back(dir / "final.json");
    }
    sum.diverged = sum.diverged || r.diverged;
    sum.runs.push_back(std::move(r));
    if (sum.diverged) break;
  }
  if (write) {
    const auto dir = cfg.run_dir();
    write_atomic(dir / "curve.csv", curve);
    sum.files.push_back(dir / "curve.csv");
    // Envelope across seeds (min/mean/max band).
    std::string env_csv = "episode,min,mean,max\n";
    const std::size_t n = sum.runs.front().curve.size();
    for (std::size_t e = 0; e < n; ++e) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo, mean = 0.0;
      std::size_t cnt = 0;
      for (const auto& r : sum.runs) {
        if (e >= r.curve.size()) continue;
        const double v = r.curve[e].cum_reward;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        mean += v;
        ++cnt;
      }
      env_csv += std::to_string(e) + ',' + fmt(lo) + ',' + fmt(mean / static_cast<double>(cnt)) + ',' + fmt(hi) + '\n';
    }
    write_atomic(dir / "envelope.csv", env_csv);
    sum.files.push_back(dir / "envelope.csv");
    write_atomic(dir / "manifest.json", manifest_json(cfg, "train", sum.files));
    sum.files.push_back(dir / "manifest.json");
  }
  return sum;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("nan"); };
  std::string out =
      "name,controller,cum_reward,J_TTT_veh_s,J_fuel_l,J_comfort,ttt_improvement_pct,fuel_improvement_pct,"
      "comfort_improvement_pct,reward_improvement_pct\n";
  for (const auto& r : rows) {
    out += r.name + ',' + r.kind + ',' + fmt(r.perf.cum_reward) + ',' + fmt(r.perf.ttt) + ',' + fmt(r.perf.fuel) + ',' +
           fmt(r.perf.comfort) + ',' + opt(r.vs_baseline.ttt) + ',' + opt(r.vs_baseline.fuel) + ',' +
           opt(r.vs_baseline.comfort) + ',' + opt(r.vs_baseline.reward) + '\n';
  }
  return out;
}

std::vector<ComparisonRow> run_comparison(const std::vector<ScenarioConfig>& cfgs, const std::filesystem::path& out,
                                          bool write) {
  if (cfgs.empty()) throw ConfigError("comparison needs at least one scenario");
  const Grid g0 = cfgs.front().grid();
  for (const auto& c : cfgs) {
    const Grid g = c.grid();
    if (g.M != g0.M || g.N != g0.N || g.dx != g0.dx || g.dt != g0.dt) {
      throw ConfigError("scenario '" + c.name + "' uses a different grid or horizon");
    }
  }
  std::vector<ScenarioResult> results;
  results.reserve(cfgs.size());
  for (const auto& c : cfgs) results.push_back(run_scenario(c, write));

  std::size_t base = 0;
  for (std::size_t k = 0; k < cfgs.size(); ++k) {
    if (cfgs[k].kind == ControllerKind::setpoint) {
      base = k;
      break;
    }
  }
  std::vector<ComparisonRow> rows;
  for (std::size_t k = 0; k < cfgs.size(); ++k) {
    std::string kind = to_string(cfgs[k].kind);
    if (cfgs[k].kind == ControllerKind::rl_policy) kind += "-" + rl::to_string(cfgs[k].scheme);
    rows.push_back({cfgs[k].name, kind, results[k].perf, compare_reports(results[k].perf, results[base].perf)});
  }
  if (write) {
    write_atomic(out / "comparison.csv", comparison_csv(rows));
    std::string merged = "step,t_s";
    for (const auto& c : cfgs) merged += "," + c.name;
    merged += '\n';
    for (std::size_t n = 0; n < results.front().rewards.size(); ++n) {
      merged += std::to_string(n + 1) + ',' + fmt(g0.t(n + 1));
      for (const auto& r : results) merged += ',' + fmt(r.rewards[n]);
      merged += '\n';
    }
    write_atomic(out / "rewards_merged.csv", merged);
  }
  return rows;
}

}  // namespace arz
