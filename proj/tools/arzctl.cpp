// arzctl: simulate, train, evaluate, compare, kernels.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "arz/errors.hpp"
#include "arz/scenario.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kBlowUp = 3, kDiverged = 4 };

struct Common {
  std::vector<std::string> configs;
  std::string out;
  std::vector<std::string> sets;
  long long seed = -1;
  int workers = 0;
};

arz::ScenarioConfig load(const std::string& path, const Common& c) {
  arz::Config cfg = arz::load_config_or_manifest(path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw arz::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.out.empty()) cfg.set("run.out", c.out);
  if (c.seed >= 0) cfg.set("run.seed", std::to_string(c.seed));
  if (c.workers > 0) cfg.set("run.workers", std::to_string(c.workers));
  return arz::ScenarioConfig::from_config(cfg);
}

void print_perf(const std::string& name, const arz::PerfReport& p) {
  std::printf("%-24s cum_reward=%10.3f  J_TTT=%10.1f veh*s  J_fuel=%8.3f l  J_comfort=%9.3f", name.c_str(),
              p.cum_reward, p.ttt, p.fuel, p.comfort);
  if (p.time_to_threshold) std::printf("  t_thr=%.1f s", *p.time_to_threshold);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ARZ freeway boundary control: Lyapunov controllers and PPO policies"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* sub, bool many) {
    if (many) {
      sub->add_option("--config", c.configs, "config file or run manifest (repeatable)")->required();
    } else {
      sub->add_option("--config", c.configs, "config file or run manifest")->required()->expected(1);
    }
    sub->add_option("--out", c.out, "output directory (overrides run.out)");
    sub->add_option("--seed", c.seed, "base seed (overrides run.seed)");
    sub->add_option("--workers", c.workers, "parallel workers (overrides run.workers)");
    sub->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
  };
  auto* simulate = app.add_subcommand("simulate", "closed-loop run with the configured controller");
  add_common(simulate, false);
  auto* train = app.add_subcommand("train", "train PPO policies for the configured scheme");
  add_common(train, false);
  auto* evaluate = app.add_subcommand("evaluate", "deterministic rollout of a trained checkpoint");
  add_common(evaluate, false);
  std::string checkpoint;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  auto* compare = app.add_subcommand("compare", "run several scenarios and tabulate improvements");
  add_common(compare, true);
  auto* kernels = app.add_subcommand("kernels", "write the backstepping gain kernels");
  add_common(kernels, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const auto cfg = load(c.configs.front(), c);
      const auto res = arz::run_scenario(cfg);
      print_perf(cfg.name, res.perf);
      std::printf("wrote %zu files to %s\n", res.files.size(), cfg.run_dir().string().c_str());
    } else if (train->parsed()) {
      const auto cfg = load(c.configs.front(), c);
      const auto sum = arz::run_training(cfg, true, [](const arz::rl::UpdateLog& log) {
        if (log.update % 10 == 0) {
          std::fprintf(stderr, "episodes %5zu  mean %9.2f  moving avg %9.2f  critic %.3g\n", log.episodes_done,
                       log.mean_cum_reward, log.moving_average, log.critic_loss);
        }
      });
      for (std::size_t k = 0; k < sum.eval_best.size(); ++k) {
        std::printf("seed %llu: evaluation cum_reward best=%.3f final=%.3f\n", cfg.seed + k, sum.eval_best[k],
                    sum.eval_final[k]);
      }
      if (sum.diverged) {
        std::fprintf(stderr, "training diverged: %s\n", sum.runs.back().message.c_str());
        return kDiverged;
      }
    } else if (evaluate->parsed()) {
      Common e = c;
      e.sets.push_back("controller.kind=rl-policy");
      e.sets.push_back("controller.checkpoint=" + checkpoint);
      const auto cfg = load(c.configs.front(), e);
      const auto res = arz::run_scenario(cfg);
      print_perf(cfg.name, res.perf);
    } else if (compare->parsed()) {
      std::vector<arz::ScenarioConfig> cfgs;
      for (const auto& p : c.configs) cfgs.push_back(load(p, c));
      const std::filesystem::path out = c.out.empty() ? cfgs.front().out : std::filesystem::path(c.out);
      const auto rows = arz::run_comparison(cfgs, out);
      std::cout << arz::comparison_csv(rows);
    } else if (kernels->parsed()) {
      const auto cfg = load(c.configs.front(), c);
      arz::KernelOptions ko;
      ko.reflection_term = cfg.reflection_term;
      const auto tab = arz::backstepping_gains(cfg.assumed(), cfg.params, cfg.grid(), ko);
      arz::write_atomic(cfg.run_dir() / "kernels.csv", arz::kernels_csv(tab));
      std::printf("kernel iterations %d, outlet gain %.6g; wrote %s\n", tab.iterations, tab.outlet_gain,
                  (cfg.run_dir() / "kernels.csv").string().c_str());
    }
  } catch (const arz::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const arz::DomainError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const arz::UnsupportedRegimeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const arz::BlowUpError& e) {
    std::fprintf(stderr, "numerical blow-up: %s\n", e.what());
    return kBlowUp;
  } catch (const arz::BoundaryInfeasibleError& e) {
    std::fprintf(stderr, "numerical blow-up: %s\n", e.what());
    return kBlowUp;
  } catch (const arz::TrainingError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kDiverged;
  }
  return kOk;
}
