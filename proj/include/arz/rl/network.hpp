#pragma once

// Small fully connected networks with tanh hidden layers, stored as one flat
// parameter vector (per layer: row-major W[out][in], then b[out]). Fixed
// normalization constants wrap the trainable layers:
//   y = out_scale * f((x - in_shift) / in_scale).

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace arz::rl {

class Mlp {
 public:
  Mlp() = default;
  /// sizes = {in, hidden..., out}. Weights ~ U(-1/sqrt(in), 1/sqrt(in)), the
  /// output layer scaled by out_scale; biases zero.
  Mlp(std::vector<std::size_t> sizes, std::mt19937_64& rng, double out_scale = 1.0);
  /// Zero-initialized network with the given shape.
  explicit Mlp(std::vector<std::size_t> sizes);

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t num_params() const { return theta_.size(); }

  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }

  /// Offsets of layer l's weights and biases in params().
  std::size_t weight_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const { return offsets_[l] + sizes_[l] * sizes_[l + 1]; }

  /// Activations of every layer; act[0] is the standardized input, act.back() the
  /// scaled linear output.
  struct Tape {
    std::vector<std::vector<double>> act;
  };

  void forward(std::span<const double> x, Tape& tape) const;
  std::vector<double> forward(std::span<const double> x) const;

  /// Accumulates d(loss)/d(theta) into grad given d(loss)/d(output).
  /// `scratch` avoids reallocations between calls.
  void backward(const Tape& tape, std::span<const double> dout, std::span<double> grad,
                std::vector<std::vector<double>>& scratch) const;

  bool finite() const;

  /// Fixed (untrained) input standardization; empty vectors mean identity.
  void set_input_normalization(std::vector<double> shift, std::vector<double> scale);
  const std::vector<double>& input_shift() const { return in_shift_; }
  const std::vector<double>& input_scale() const { return in_scale_; }
  void set_output_scale(double s);
  double output_scale() const { return out_scale_; }

 private:
  void layout();

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> theta_;
  std::vector<double> in_shift_, in_scale_;
  double out_scale_ = 1.0;
};

/// Adam on a flat parameter vector (minimizes).
class Adam {
 public:
  explicit Adam(std::size_t n = 0, double lr = 1e-3) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::vector<double>& theta, std::span<const double> grad);
  double lr() const { return lr_; }

 private:
  double lr_;
  double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_, v_;
};

/// Rescales grad in place so its Euclidean norm is at most max_norm; returns the original norm.
double clip_grad_norm(std::span<double> grad, double max_norm);

}  // namespace arz::rl
