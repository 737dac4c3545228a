#include "arz/rl/network.hpp"

#include <cmath>

#include "arz/errors.hpp"

namespace arz::rl {

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) { layout(); }

Mlp::Mlp(std::vector<std::size_t> sizes, std::mt19937_64& rng, double out_scale) : sizes_(std::move(sizes)) {
  layout();
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const double scale = l + 1 == num_layers() ? out_scale : 1.0;
    double* W = theta_.data() + weight_offset(l);
    for (std::size_t k = 0; k < sizes_[l] * sizes_[l + 1]; ++k) W[k] = scale * u(rng);
  }
}

void Mlp::layout() {
  if (sizes_.size() < 2) throw ConfigError("network needs at least an input and an output layer");
  for (std::size_t s : sizes_) {
    if (s == 0) throw ConfigError("layer sizes must be positive");
  }
  offsets_.clear();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(n);
    n += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  theta_.assign(n, 0.0);
}

void Mlp::forward(std::span<const double> x, Tape& tape) const {
  if (x.size() != input_size()) throw ConfigError("network input has wrong size");
  tape.act.resize(sizes_.size());
  tape.act[0].assign(x.begin(), x.end());
  if (!in_shift_.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) tape.act[0][i] = (x[i] - in_shift_[i]) / in_scale_[i];
  }
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* W = theta_.data() + weight_offset(l);
    const double* b = theta_.data() + bias_offset(l);
    const double* a = tape.act[l].data();
    auto& z = tape.act[l + 1];
    z.resize(out);
    const bool hidden = l + 1 < num_layers();
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = W + o * in;
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      z[o] = hidden ? std::tanh(s) : out_scale_ * s;
    }
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  Tape t;
  forward(x, t);
  return std::move(t.act.back());
}

void Mlp::backward(const Tape& tape, std::span<const double> dout, std::span<double> grad,
                   std::vector<std::vector<double>>& scratch) const {
  if (dout.size() != output_size() || grad.size() != theta_.size()) throw ConfigError("gradient shape mismatch");
  scratch.resize(2);
  auto& delta = scratch[0];
  auto& prev = scratch[1];
  delta.assign(dout.begin(), dout.end());
  for (double& d : delta) d *= out_scale_;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* W = theta_.data() + weight_offset(l);
    double* gW = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    const double* a = tape.act[l].data();
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      if (d == 0.0) continue;
      double* grow = gW + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
    }
    if (l == 0) break;
    prev.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    // tanh' = 1 - a^2 on the hidden activations feeding layer l.
    for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - a[i] * a[i];
    delta.swap(prev);
  }
}

bool Mlp::finite() const {
  for (double t : theta_) {
    if (!std::isfinite(t)) return false;
  }
  return true;
}

void Mlp::set_input_normalization(std::vector<double> shift, std::vector<double> scale) {
  if (shift.size() != scale.size() || (!shift.empty() && shift.size() != input_size())) {
    throw ConfigError("input normalization has wrong size");
  }
  for (double c : scale) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("input scale must be positive and finite");
  }
  in_shift_ = std::move(shift);
  in_scale_ = std::move(scale);
}

void Mlp::set_output_scale(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("output scale must be positive and finite");
  out_scale_ = s;
}

void Adam::step(std::vector<double>& theta, std::span<const double> grad) {
  if (m_.size() != theta.size()) {
    m_.assign(theta.size(), 0.0);
    v_.assign(theta.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < theta.size(); ++k) {
    m_[k] = b1_ * m_[k] + (1.0 - b1_) * grad[k];
    v_[k] = b2_ * v_[k] + (1.0 - b2_) * grad[k] * grad[k];
    theta[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
  }
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double s = 0.0;
  for (double g : grad) s += g * g;
  const double norm = std::sqrt(s);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (double& g : grad) g *= f;
  }
  return norm;
}

}  // namespace arz::rl
