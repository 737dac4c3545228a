// Serial reference vs OpenMP kernels. Arg(0) = serial, Arg(1) = parallel.

#include <benchmark/benchmark.h>

#include <numeric>
#include <omp.h>
#include <random>

#include "arz/control.hpp"
#include "arz/rl/ppo.hpp"

using namespace arz;

namespace {

struct Fixture {
  rl::EnvConfig env;
  rl::PpoConfig cfg;
  rl::Checkpoint ck;
  rl::Batch batch;
  std::vector<std::size_t> idx;

  Fixture() {
    ck = rl::initial_checkpoint(env, cfg);
    for (unsigned e = 0; e < 2; ++e) {
      std::mt19937_64 rng(e);
      rl::TrafficEnv te(env);
      rl::rollout(te, ck.actor, rng, batch);
    }
    batch.returns = rl::discounted_returns(batch.rewards, env.gamma, batch.done);
    rl::compute_advantages(batch, ck.critic);
    idx.resize(batch.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_actor_grad(benchmark::State& st) {
  auto& f = fixture();
  std::vector<double> grad;
  for (auto _ : st) {
    benchmark::DoNotOptimize(rl::actor_loss_grad(f.ck.actor, f.batch, f.idx, f.cfg.clip, grad, st.range(0) != 0));
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(f.batch.size()));
}

void BM_critic_grad(benchmark::State& st) {
  auto& f = fixture();
  std::vector<double> grad;
  for (auto _ : st) {
    benchmark::DoNotOptimize(rl::critic_loss_grad(f.ck.critic, f.batch, f.idx, grad, st.range(0) != 0));
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(f.batch.size()));
}

void BM_advantages(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) {
    rl::compute_advantages(f.batch, f.ck.critic, st.range(0) != 0);
    benchmark::ClobberMemory();
  }
}

void BM_tune_pi(benchmark::State& st) {
  const ModelParams p;
  const SteadyState ss = make_steady_state(0.120, p);
  const Grid g = default_grid(p, 240.0);
  StabilityOptions so;
  so.refine = 2;
  for (auto _ : st) benchmark::DoNotOptimize(tune_pi(ss, p, g, so, st.range(0) != 0));
}

void BM_train_rollouts(benchmark::State& st) {
  rl::EnvConfig env;
  env.dx = 20.0;
  rl::PpoConfig cfg;
  cfg.episodes = 8;
  cfg.workers = st.range(0) != 0 ? omp_get_max_threads() : 1;
  cfg.parallel_grad = st.range(0) != 0;
  for (auto _ : st) benchmark::DoNotOptimize(rl::train(env, cfg).curve.size());
}

}  // namespace

BENCHMARK(BM_actor_grad)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_critic_grad)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_advantages)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_tune_pi)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_rollouts)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
