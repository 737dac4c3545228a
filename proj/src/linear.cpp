#include <algorithm>
#include <cmath>

#include "arz/controller.hpp"
#include "arz/errors.hpp"
#include "arz/solver.hpp"

namespace arz {

namespace {

// Linear interpolation of nodal values on [0, L] with spacing h.
double interp(const std::vector<double>& f, double h, double x) {
  const std::size_t n = f.size() - 1;
  double s = x / h;
  if (s <= 0.0) return f.front();
  if (s >= static_cast<double>(n)) return f.back();
  const auto j = static_cast<std::size_t>(s);
  const double th = s - static_cast<double>(j);
  return (1.0 - th) * f[j] + th * f[j + 1];
}

// Smallest integers with lambda1 * p1 == |lambda2| * p2.
std::pair<int, int> commensurate_periods(double lambda1, double mu) {
  for (int p2 = 1; p2 <= 64; ++p2) {
    const double p1 = mu * p2 / lambda1;
    const double r = std::round(p1);
    if (r >= 1.0 && std::abs(p1 - r) <= 1e-9 * p1) return {static_cast<int>(r), p2};
  }
  throw ConfigError("characteristic speeds are not commensurate; the linear model needs a rational ratio");
}

}  // namespace

double normalized_l2(std::span<const double> drho, std::span<const double> dv, double dx,
                     const SteadyState& ss) {
  double acc = 0.0;
  const std::size_t n = drho.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = drho[i] / ss.rho_star;
    const double b = dv[i] / ss.v_star;
    const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    acc += w * (a * a + b * b);
  }
  return std::sqrt(acc * dx);
}

LinearTrajectory simulate_linear(const TrafficState& init_deviation, const LinearCoeffs& lin,
                                 Controller& controller, const Grid& grid, double T, int refine) {
  if (!(lin.lambda1 > 0.0 && lin.lambda2 < 0.0)) throw ConfigError("linear model requires a congested regime");
  if (init_deviation.size() != grid.M) throw ConfigError("initial deviation does not match grid");
  if (refine < 1) throw ConfigError("refine must be >= 1");

  const SteadyState& ss = lin.ss;
  const double L = grid.L;
  const double mu = -lin.lambda2;
  const auto [p1, p2] = commensurate_periods(lin.lambda1, mu);
  // Each family shifts exactly one cell per step (unit Courant number).
  const auto k = static_cast<std::size_t>(
      std::ceil(L * refine / (grid.dx * std::min(p1, p2)) - 1e-9));
  const std::size_t n1 = k * p1;
  const std::size_t n2 = k * p2;
  const double h1 = L / static_cast<double>(n1);
  const double h2 = L / static_cast<double>(n2);
  const double dt = h1 / lin.lambda1;
  if (std::abs(h2 - mu * dt) > 1e-9 * h2) throw ConfigError("inconsistent linear grid");

  // Linearized boundary relations between (w~, v~) and the flow deviation q~.
  const double l1 = lin.lambda1;
  const double l2 = lin.lambda2;
  const double rho_s = ss.rho_star;
  auto w_from = [&](double v, double q) { return (l2 / l1) * v + (l1 - l2) / (l1 * rho_s) * q; };
  auto v_from = [&](double w, double q) { return (l1 * w - (l1 - l2) * q / rho_s) / l2; };

  std::vector<double> W(n1 + 1), Vv(n2 + 1);
  {
    std::vector<double> drho = init_deviation.rho, dv = init_deviation.v;
    for (std::size_t j = 0; j <= n1; ++j) {
      const double x = h1 * static_cast<double>(j);
      const double r = interp(drho, grid.dx, x);
      const double v = interp(dv, grid.dx, x);
      W[j] = lin.weight(x) * (v - lin.slope * r);
    }
    for (std::size_t j = 0; j <= n2; ++j) Vv[j] = interp(dv, grid.dx, h2 * static_cast<double>(j));
  }

  auto sample = [&](double t) {
    TrafficState d;
    d.t = t;
    d.rho.resize(grid.M);
    d.v.resize(grid.M);
    for (std::size_t i = 0; i < grid.M; ++i) {
      const double x = grid.x(i);
      const double w = interp(W, h1, x) / lin.weight(x);
      const double v = interp(Vv, h2, x);
      d.v[i] = v;
      d.rho[i] = (v - w) / lin.slope;
    }
    return d;
  };

  // Small-amplitude embedding linearizes the controller; fixed for the whole run
  // so that stateful laws integrate consistently.
  const TrafficState d0 = sample(0.0);
  double amp = 0.0;
  for (std::size_t i = 0; i < grid.M; ++i) {
    amp = std::max({amp, std::abs(d0.rho[i]) / ss.rho_star, std::abs(d0.v[i]) / ss.v_star});
  }
  const double eps = amp > 0.0 ? 1e-5 / amp : 1.0;

  const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  LinearTrajectory out;
  out.t.reserve(steps + 1);
  controller.reset();

  // Sampled-data loop: the interior is advanced first, then the controller
  // observes the state at the new time (incoming boundary values still at
  // their previous setting) and its command closes both boundaries.
  std::vector<double> Wn(n1 + 1), Vn(n2 + 1);
  auto cw = [&](const std::vector<double>& f, double x) { return lin.coupling(x) * interp(f, h1, x); };
  for (std::size_t n = 0;; ++n) {
    const double t = dt * static_cast<double>(n);
    TrafficState d = sample(t);
    out.t.push_back(t);
    out.l2.push_back(normalized_l2(d.rho, d.v, grid.dx, ss));
    out.deviations.push_back(std::move(d));
    if (n == steps) break;

    for (std::size_t j = n1; j >= 1; --j) Wn[j] = W[j - 1];
    Wn[0] = W[0];
    for (std::size_t j = 0; j < n2; ++j) {
      const double x = h2 * static_cast<double>(j);
      Vn[j] = Vv[j + 1] + 0.5 * dt * (cw(W, x + h2) + cw(Wn, x));
    }
    Vn[n2] = Vv[n2];
    W.swap(Wn);
    Vv.swap(Vn);

    const TrafficState pred = sample(t + dt);
    TrafficState observed;
    observed.t = t + dt;
    observed.rho.resize(grid.M);
    observed.v.resize(grid.M);
    for (std::size_t i = 0; i < grid.M; ++i) {
      observed.rho[i] = ss.rho_star + eps * pred.rho[i];
      observed.v[i] = ss.v_star + eps * pred.v[i];
    }
    const BoundaryCommand cmd = controller.command(observed, dt);
    W[0] = w_from(Vv[0], (cmd.inlet - ss.q_star) / eps);
    if (cmd.outlet_kind == OutletKind::velocity) {
      Vv[n2] = (cmd.outlet_value - ss.v_star) / eps;
    } else {
      Vv[n2] = v_from(W[n1] / lin.weight(L), (cmd.outlet_value - ss.q_star) / eps);
    }
  }
  return out;
}

}  // namespace arz
