#include <doctest.h>

#include <cmath>
#include <numbers>

#include "arz/control.hpp"
#include "arz/errors.hpp"
#include "arz/metrics.hpp"
#include "arz/rl/env.hpp"
#include "oracles.hpp"

using namespace arz;

namespace {

// Trajectory sampled from analytic fields on the default grid.
template <class Rho, class V>
Trajectory synthetic(const Grid& g, Rho rho, V v) {
  Trajectory t;
  t.grid = g;
  for (std::size_t n = 0; n < g.N; ++n) {
    TrafficState s;
    s.t = g.t(n);
    for (std::size_t i = 0; i < g.M; ++i) {
      s.rho.push_back(rho(g.x(i), s.t));
      s.v.push_back(v(g.x(i), s.t));
    }
    t.states.push_back(std::move(s));
  }
  return t;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("L2 deviation") {
  const ModelParams p;
  const SteadyState ss = make_steady_state(0.120, p);
  const Grid g = default_grid(p, 240.0);
  CHECK(l2_deviation(uniform_state(ss, g), ss, g.dx).rho == 0.0);
  CHECK(l2_deviation(uniform_state(ss, g), ss, g.dx).v == 0.0);

  const L2Norms n = l2_deviation(sinusoidal_state(ss, g), ss, g.dx);
  const double closed = 0.1 * ss.rho_star * std::sqrt(p.L / 2.0);
  const double quad = 0.1 * ss.rho_star *
                      std::sqrt(oracle::simpson([&](double x) { return std::pow(std::sin(3 * std::numbers::pi * x / p.L), 2); }, 0, p.L));
  CHECK(quad == doctest::Approx(closed).epsilon(1e-10));
  CHECK(n.rho == doctest::Approx(closed).epsilon(1e-6));
  CHECK(n.v == doctest::Approx(0.1 * ss.v_star * std::sqrt(p.L / 2.0)).epsilon(1e-6));

  const L2Norms n2 = l2_deviation(sinusoidal_state(ss, g, 0.2), ss, g.dx);
  CHECK(n2.rho == doctest::Approx(2 * n.rho));
  CHECK(n2.v == doctest::Approx(2 * n.v));
}

TEST_CASE("reward values") {
  const ModelParams p;
  const SteadyState ss = make_steady_state(0.120, p);
  const Grid g = default_grid(p, 240.0);
  TrafficState s = uniform_state(ss, g);
  CHECK(reward(s, ss) == 0.0);
  s.rho[17] = 1.1 * ss.rho_star;
  CHECK(reward(s, ss) == doctest::Approx(-0.01));

  double sum_sin2 = 0.0;
  for (std::size_t i = 0; i < g.M; ++i) sum_sin2 += std::pow(std::sin(3 * std::numbers::pi * g.x(i) / p.L), 2);
  const double r0 = reward(sinusoidal_state(ss, g), ss);
  CHECK(r0 == doctest::Approx(-2 * 0.01 * sum_sin2).epsilon(1e-12));
  CHECK(r0 == doctest::Approx(-0.51).epsilon(0.03));

  // The literal form squares the sums instead: antisymmetric profiles cancel.
  TrafficState pm = uniform_state(ss, g);
  pm.rho[3] = 1.1 * ss.rho_star;
  pm.rho[4] = 0.9 * ss.rho_star;
  CHECK(reward(pm, ss, RewardForm::literal) == doctest::Approx(0.0));
  CHECK(reward(pm, ss, RewardForm::per_cell) == doctest::Approx(-0.02));
}

TEST_CASE("reward is non-positive and zero only at the steady state") {
  const ModelParams p;
  const SteadyState ss = make_steady_state(0.120, p);
  const Grid g = default_grid(p, 240.0);
  for (double a : {1e-6, 0.01, 0.1, 0.3}) CHECK(reward(sinusoidal_state(ss, g, a), ss) < 0.0);
}

TEST_CASE("acceleration field") {
  const ModelParams p;
  const Grid g = make_grid(p.L, 10.0, 10.0, 0.8, p.v_m);
  const auto still = acceleration_field(synthetic(g, [](double, double) { return 0.1; }, [](double, double) { return 12.0; }));
  for (const auto& row : still)
    for (double a : row) CHECK(a == 0.0);

  const double alpha = 0.3;
  const auto ramp = acceleration_field(synthetic(g, [](double, double) { return 0.1; }, [&](double, double t) { return 5.0 + alpha * t; }));
  for (const auto& row : ramp)
    for (double a : row) CHECK(std::abs(a - alpha) <= 1e-10);

  const double beta = 0.01;
  const auto shear = acceleration_field(synthetic(g, [](double, double) { return 0.1; }, [&](double x, double) { return 5.0 + beta * x; }));
  for (std::size_t i = 1; i + 1 < g.M; ++i) {
    const double v = 5.0 + beta * g.x(i);
    CHECK(shear[3][i] == doctest::Approx(v * beta).epsilon(1e-10));
  }

  Trajectory one;
  one.grid = g;
  one.states.resize(1);
  CHECK_THROWS_AS(acceleration_field(one), InsufficientDataError);
}

TEST_CASE("performance indices at the steady state") {
  const ModelParams p;
  const SteadyState ss = make_steady_state(0.120, p);
  const Grid g = default_grid(p, 240.0);
  SetpointController c(ss);
  const Trajectory t = simulate(uniform_state(ss, g), c, g, p);
  const PerfReport r = perf_indices(t, ss);
  CHECK(r.ttt == doctest::Approx(14400.0).epsilon(1e-12));
  CHECK(r.comfort == doctest::Approx(0.0));
  CHECK(r.cum_reward == doctest::Approx(0.0));
  // fuel = int int rho (b0 + b1 v + b3 v^3) dx dt with a = 0
  const double per = ss.rho_star * (fuel::b0 + fuel::b1 * ss.v_star + fuel::b3 * std::pow(ss.v_star, 3));
  CHECK(r.fuel == doctest::Approx(per * p.L * 240.0).epsilon(1e-12));
  PerfOptions lin;
  lin.fuel_cubic = false;
  const double per_lin = ss.rho_star * (fuel::b0 + fuel::b1 * ss.v_star + fuel::b3 * ss.v_star);
  CHECK(perf_indices(t, ss, lin).fuel == doctest::Approx(per_lin * p.L * 240.0).epsilon(1e-12));
}

TEST_CASE("total travel time is invariant under time reversal") {
  const ModelParams p;
  const SteadyState ss = make_steady_state(0.120, p);
  const Grid g = default_grid(p, 60.0);
  SetpointController c(ss);
  Trajectory t = simulate(sinusoidal_state(ss, g), c, g, p);
  const double fwd = perf_indices(t, ss).ttt;
  std::reverse(t.states.begin(), t.states.end());
  CHECK(perf_indices(t, ss).ttt == doctest::Approx(fwd).epsilon(1e-14));
}

TEST_CASE("indices converge under refinement") {
  const ModelParams p;
  const SteadyState ss = make_steady_state(0.120, p);
  std::vector<PerfReport> reps;
  for (double dx : {20.0, 10.0, 5.0, 2.5}) {
    const Grid g = make_grid(p.L, 60.0, dx, 0.8, p.v_m);
    auto rho = [&](double x, double t) { return ss.rho_star * (1 + 0.1 * std::sin(3 * std::numbers::pi * x / p.L) * std::cos(0.1 * t)); };
    auto v = [&](double x, double t) { return ss.v_star * (1 - 0.1 * std::sin(3 * std::numbers::pi * x / p.L) * std::cos(0.1 * t)); };
    reps.push_back(perf_indices(synthetic(g, rho, v), ss));
  }
  for (auto get : {+[](const PerfReport& r) { return r.ttt; }, +[](const PerfReport& r) { return r.fuel; },
                   +[](const PerfReport& r) { return r.comfort; }}) {
    const double d1 = std::abs(get(reps[1]) - get(reps[0]));
    const double d2 = std::abs(get(reps[2]) - get(reps[1]));
    const double d3 = std::abs(get(reps[3]) - get(reps[2]));
    CHECK(d2 < d1);
    CHECK(d3 < d2);
  }
}

TEST_CASE("improvement arithmetic") {
  PerfReport base{100.0, 50.0, 10.0, -20.0, {}};
  CHECK(compare_reports(base, base).ttt.value() == 0.0);
  CHECK(compare_reports(base, base).comfort.value() == 0.0);
  PerfReport cand = base;
  cand.fuel = 0.97 * base.fuel;
  CHECK(compare_reports(cand, base).fuel.value() == doctest::Approx(3.0));
  PerfReport zero{};
  CHECK_FALSE(compare_reports(base, zero).ttt.has_value());
}

TEST_CASE("metrics and environment agree on every step") {
  rl::EnvConfig ec;
  rl::TrafficEnv env(ec);
  env.reset(0.12, 0.1);
  const SteadyState ss = env.true_state();
  Trajectory t;
  t.grid = env.grid();
  t.states.push_back(env.state());
  std::vector<double> env_rewards;
  const std::vector<double> u{0.2};
  for (int k = 0; k < 200; ++k) {
    const auto r = env.step(u);
    env_rewards.push_back(r.reward);
    t.states.push_back(env.state());
  }
  const auto series = reward_series(t, ss);
  REQUIRE(series.size() == env_rewards.size());
  for (std::size_t k = 0; k < series.size(); ++k) CHECK(std::abs(series[k] - env_rewards[k]) <= 1e-12);
}

}  // TEST_SUITE
