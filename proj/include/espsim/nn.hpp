#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "espsim/rng.hpp"

namespace espsim::nn {

using Matrix = Eigen::MatrixXd;  // column per sample
using Vector = Eigen::VectorXd;

// Storage for parameters and gradients. Eigen picks different (equally
// valid) summation orders depending on where a buffer starts, so a fixed
// alignment keeps results independent of the heap layout.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

// Fully connected network: tanh on hidden layers, identity output.
// Parameters live in a caller-owned flat vector; per layer the weight
// matrix (out x in, column-major) is followed by the bias.
class Mlp {
 public:
  // Activations of every layer for one batch, kept for the backward pass.
  struct Tape {
    std::vector<Matrix> activations;  // [0] is the input
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_width() const { return sizes_.front(); }
  int output_width() const { return sizes_.back(); }
  std::size_t num_params() const { return num_params_; }

  // Orthogonal weights scaled by the gains, zero biases.
  void init(std::span<double> params, Rng& rng, double hidden_gain, double output_gain) const;

  void forward(std::span<const double> params, std::span<const double> x, std::span<double> y) const;
  const Matrix& forward_batch(std::span<const double> params, const Matrix& x, Tape& tape) const;
  // Accumulates dLoss/dparams into `grad` given dLoss/doutput.
  void backward_batch(std::span<const double> params, const Tape& tape, const Matrix& d_out,
                      std::span<double> grad) const;

 private:
  struct Layer {
    int in = 0;
    int out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
  };

  std::vector<int> sizes_;
  std::vector<Layer> layers_;
  std::size_t num_params_ = 0;
};

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamConfig config) : config_(config), m_(n, 0.0), v_(n, 0.0) {}

  // Gradient descent step on a loss gradient.
  void step(std::span<double> params, std::span<const double> grad);

  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  std::vector<double>& first_moment() { return m_; }
  std::vector<double>& second_moment() { return v_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

// Rescales `grad` to at most `max_norm`; returns the original norm.
double clip_grad_norm(std::span<double> grad, double max_norm);

bool all_finite(std::span<const double> values);

// Numerically stable softmax / log-softmax of one logit vector.
void softmax(std::span<const double> logits, std::span<double> probs);
double sigmoid(double x);

// 64-bit FNV-1a over the raw parameter bytes, for frozen-weight checks.
std::uint64_t parameter_hash(std::span<const double> params);

}  // namespace espsim::nn
