#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "arz/control.hpp"
#include "arz/errors.hpp"

using namespace arz;

namespace {

struct Setup {
  ModelParams p;
  SteadyState ss = make_steady_state(0.120, p);
  Grid g = default_grid(p, 240.0);
};

}  // namespace

TEST_SUITE("control") {

TEST_CASE("setpoint command") {
  Setup s;
  const BoundaryCommand c = setpoint_command(s.ss);
  CHECK(c.inlet == doctest::Approx(1.2));
  CHECK(c.outlet_value == doctest::Approx(1.2));
  CHECK(c.outlet_kind == OutletKind::flow);
  const SteadyState other = make_steady_state(0.13, s.p);
  CHECK(setpoint_command(other).inlet == doctest::Approx(other.q_star));
}

TEST_CASE("P gain and law") {
  Setup s;
  CHECK(p_gain(s.ss, s.p) == doctest::Approx(0.080));
  TrafficState obs = uniform_state(s.ss, s.g);
  CHECK(p_command(obs, s.ss, s.p).inlet == doctest::Approx(1.2));
  obs.v[0] += 1.0;
  CHECK(p_command(obs, s.ss, s.p).inlet == doctest::Approx(1.28));
}

TEST_CASE("P law is linear in the deviation before clamping") {
  Setup s;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int k = 0; k < 50; ++k) {
    const double a = u(rng), b = u(rng);
    auto dev = [&](double d) {
      TrafficState o = uniform_state(s.ss, s.g);
      o.v[0] += d;
      return p_command(o, s.ss, s.p).inlet - s.ss.q_star;
    };
    CHECK(std::abs(dev(a + b) - dev(a) - dev(b)) <= 1e-12);
    CHECK(std::abs(dev(2 * a) - 2 * dev(a)) <= 1e-12);
  }
}

TEST_CASE("kernel factor structure") {
  Setup s;
  const GainTable tab = backstepping_gains(s.ss, s.p, s.g);
  const LinearCoeffs lin = linearize(s.ss, s.p);
  const double f = (s.ss.lambda1 - s.ss.lambda2) / s.ss.lambda1;
  CHECK(f == doctest::Approx(3.0));
  REQUIRE(tab.xi.size() == s.g.M);
  for (std::size_t i = 0; i < s.g.M; ++i) {
    CHECK(std::isfinite(tab.c_q[i]));
    CHECK(std::isfinite(tab.c_v[i]));
    CHECK(tab.c_q[i] / f == doctest::Approx(tab.kernel_K[i] * lin.weight(tab.xi[i])).epsilon(1e-12));
  }
  CHECK(tab.iterations <= 200);
  CHECK(tab.outlet_gain == 0.0);
}

TEST_CASE("kernel weights flatten without relaxation") {
  Setup s;
  s.p.tau = std::numeric_limits<double>::infinity();
  const LinearCoeffs lin = linearize(s.ss, s.p);
  for (double x : {0.0, 100.0, 500.0}) CHECK(lin.weight(x) == 1.0);
  const GainTable tab = backstepping_gains(s.ss, s.p, s.g);
  for (std::size_t i = 0; i < s.g.M; ++i) {
    CHECK(tab.c_q[i] == doctest::Approx(3.0 * tab.kernel_K[i]).epsilon(1e-12));
  }
}

TEST_CASE("backstepping law") {
  Setup s;
  KernelOptions ko;
  ko.reflection_term = true;
  const GainTable tab = backstepping_gains(s.ss, s.p, s.g, ko);
  TrafficState obs = uniform_state(s.ss, s.g);
  CHECK(backstepping_command(obs, tab, s.ss, s.p, s.g).outlet_value == doctest::Approx(s.ss.q_star));

  // Constant flow deviation at v = v*: outlet = q* + delta * trapezoid(c_q).
  const double delta = 0.01;
  for (std::size_t i = 0; i < s.g.M; ++i) obs.rho[i] = (s.ss.q_star + delta) / s.ss.v_star;
  obs.rho.back() = s.ss.rho_star;  // keep w(L) = 0
  double trap = 0.0;
  for (std::size_t i = 0; i < s.g.M; ++i) trap += (i == 0 || i + 1 == s.g.M ? 0.5 : 1.0) * tab.c_q[i];
  trap *= s.g.dx;
  const double expected = s.ss.q_star + delta * (trap - 0.5 * s.g.dx * tab.c_q.back());
  CHECK(backstepping_command(obs, tab, s.ss, s.p, s.g).outlet_value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("backstepping deviation is linear") {
  Setup s;
  KernelOptions ko;
  ko.reflection_term = true;
  const GainTable tab = backstepping_gains(s.ss, s.p, s.g, ko);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 20; ++k) {
    std::vector<double> va(s.g.M), qa(s.g.M), vb(s.g.M), qb(s.g.M), vs(s.g.M), qs(s.g.M), v2(s.g.M), q2(s.g.M);
    for (std::size_t i = 0; i < s.g.M; ++i) {
      va[i] = n01(rng), qa[i] = 0.1 * n01(rng), vb[i] = n01(rng), qb[i] = 0.1 * n01(rng);
      vs[i] = va[i] + vb[i], qs[i] = qa[i] + qb[i], v2[i] = 2 * va[i], q2[i] = 2 * qa[i];
    }
    const double wa = n01(rng), wb = n01(rng);
    const double da = backstepping_deviation(va, qa, wa, tab, s.ss, s.g.dx);
    const double db = backstepping_deviation(vb, qb, wb, tab, s.ss, s.g.dx);
    CHECK(std::abs(backstepping_deviation(vs, qs, wa + wb, tab, s.ss, s.g.dx) - da - db) <= 1e-12);
    CHECK(std::abs(backstepping_deviation(v2, q2, 2 * wa, tab, s.ss, s.g.dx) - 2 * da) <= 1e-12);
  }
}

TEST_CASE("PI law and integrators") {
  Setup s;
  const PiGains g = default_pi_gains(s.ss);
  PiIntegrators integ;
  const BoundaryCommand c = pi_command(uniform_state(s.ss, s.g), g, s.ss, s.p, 0.2, integ);
  CHECK(c.inlet == doctest::Approx(s.ss.q_star));
  CHECK(c.outlet_kind == OutletKind::velocity);
  CHECK(c.outlet_value == doctest::Approx(s.ss.v_star));

  // Constant outlet density deviation d with ki = 1: I = k dt d before clamping.
  PiGains unit = g;
  unit.ki_r = 1.0;
  unit.windup_r = 1e9;
  TrafficState o = uniform_state(s.ss, s.g);
  const double d = 0.002;
  o.rho.back() += d;
  PiIntegrators acc;
  for (int k = 0; k < 25; ++k) pi_command(o, unit, s.ss, s.p, 0.2, acc);
  CHECK(acc.I_r == doctest::Approx(25 * 0.2 * d));
}

TEST_CASE("PI integrators respect the anti-windup limits") {
  Setup s;
  PiController c(s.ss, default_pi_gains(s.ss), s.p);
  TrafficState o = uniform_state(s.ss, s.g);
  o.rho.back() += 0.02;
  o.v.front() -= 3.0;
  for (int k = 0; k < 5000; ++k) {
    c.command(o, 0.2);
    CHECK(std::abs(c.integrators().I_r) <= c.gains().windup_r);
    CHECK(std::abs(c.integrators().I_v) <= c.gains().windup_v);
  }
  PiGains bad = default_pi_gains(s.ss);
  bad.windup_v = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("zero-deviation fixed point for every law") {
  Setup s;
  const TrafficState o = uniform_state(s.ss, s.g);
  for (auto kind : {ControllerKind::setpoint, ControllerKind::backstepping, ControllerKind::p, ControllerKind::pi}) {
    auto c = make_controller(kind, s.ss, s.p, s.g);
    const BoundaryCommand cmd = c->command(o, s.g.dt);
    CHECK(cmd.inlet == doctest::Approx(s.ss.q_star));
    if (cmd.outlet_kind == OutletKind::flow) {
      CHECK(cmd.outlet_value == doctest::Approx(s.ss.q_star));
    } else {
      CHECK(cmd.outlet_value == doctest::Approx(s.ss.v_star));
    }
  }
  CHECK_THROWS_AS(make_controller(ControllerKind::rl_policy, s.ss, s.p, s.g), ConfigError);
}

TEST_CASE("linear model: zero deviation stays zero") {
  Setup s;
  TrafficState zero = uniform_state(s.ss, s.g);
  for (std::size_t i = 0; i < s.g.M; ++i) zero.rho[i] = zero.v[i] = 0.0;
  SetpointController c(s.ss);
  const LinearTrajectory lt = simulate_linear(zero, linearize(s.ss, s.p), c, s.g, 60.0);
  for (double l : lt.l2) CHECK(l == 0.0);
}

TEST_CASE("finite-time convergence on the linearized model") {
  Setup s;
  const LinearCoeffs lin = linearize(s.ss, s.p);
  ControllerOptions opts;
  opts.reflection_term = true;
  auto bk = make_controller(ControllerKind::backstepping, s.ss, s.p, s.g, opts);
  const StabilityReport rb = check_stabilizing(*bk, lin, s.g);
  CHECK(rb.passed);
  CHECK(rb.bound == doctest::Approx(75.0 + 2.0 * s.g.dx / 10.0));
  auto p = make_controller(ControllerKind::p, s.ss, s.p, s.g);
  CHECK(check_stabilizing(*p, lin, s.g).passed);
  SetpointController sp(s.ss);
  CHECK_FALSE(check_stabilizing(sp, lin, s.g).passed);
}

TEST_CASE("envelope helper") {
  const std::vector<double> t{0, 1, 2, 3, 4, 5};
  CHECK(monotone_envelope(t, {5, 1, 4, 1, 3, 0}, 2.0));
  CHECK_FALSE(monotone_envelope(t, {5, 1, 4, 6, 3, 0}, 2.0));
  CHECK_FALSE(monotone_envelope(t, {1, 1, 1, 1, 1, 1}, 2.0));
}

TEST_CASE("PI tuning is identical serially and in parallel") {
  Setup s;
  StabilityOptions so;
  so.refine = 1;
  so.T = 120.0;
  const PiTuning a = tune_pi(s.ss, s.p, s.g, so, false);
  const PiTuning b = tune_pi(s.ss, s.p, s.g, so, true);
  CHECK(a.gains.kp_r == b.gains.kp_r);
  CHECK(a.gains.ki_r == b.gains.ki_r);
  CHECK(a.gains.kp_v == b.gains.kp_v);
  CHECK(a.gains.ki_v == b.gains.ki_v);
  CHECK(a.candidates == 625);
}

}  // TEST_SUITE
