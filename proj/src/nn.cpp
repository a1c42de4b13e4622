#include "espsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "espsim/errors.hpp"

namespace espsim::nn {

namespace {

using ConstMatrixMap = Eigen::Map<const Matrix>;
using ConstVectorMap = Eigen::Map<const Vector>;

}  // namespace

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
  for (int s : sizes_)
    if (s < 1) throw ConfigError("MLP layer sizes must be positive");
  std::size_t offset = 0;
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    Layer layer;
    layer.in = sizes_[i];
    layer.out = sizes_[i + 1];
    layer.weight_offset = offset;
    offset += static_cast<std::size_t>(layer.in) * static_cast<std::size_t>(layer.out);
    layer.bias_offset = offset;
    offset += static_cast<std::size_t>(layer.out);
    layers_.push_back(layer);
  }
  num_params_ = offset;
}

void Mlp::init(std::span<double> params, Rng& rng, double hidden_gain, double output_gain) const {
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& L = layers_[li];
    const double gain = li + 1 == layers_.size() ? output_gain : hidden_gain;
    const int rows = std::max(L.out, L.in);
    const int cols = std::min(L.out, L.in);
    Matrix g(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) g(r, c) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
    const Matrix r = qr.matrixQR().topLeftCorner(cols, cols);
    for (int c = 0; c < cols; ++c)
      if (r(c, c) < 0) q.col(c) *= -1.0;
    Matrix w = L.out >= L.in ? q : Matrix(q.transpose());
    Eigen::Map<Matrix>(params.data() + L.weight_offset, L.out, L.in) = gain * w;
    std::fill_n(params.data() + L.bias_offset, L.out, 0.0);
  }
}

void Mlp::forward(std::span<const double> params, std::span<const double> x, std::span<double> y) const {
  Vector h = ConstVectorMap(x.data(), static_cast<Eigen::Index>(x.size()));
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& L = layers_[li];
    ConstMatrixMap w(params.data() + L.weight_offset, L.out, L.in);
    ConstVectorMap b(params.data() + L.bias_offset, L.out);
    Vector z = w * h + b;
    if (li + 1 < layers_.size()) z = z.array().tanh();
    h = std::move(z);
  }
  std::copy(h.data(), h.data() + h.size(), y.begin());
}

const Matrix& Mlp::forward_batch(std::span<const double> params, const Matrix& x, Tape& tape) const {
  tape.activations.resize(layers_.size() + 1);
  tape.activations[0] = x;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& L = layers_[li];
    ConstMatrixMap w(params.data() + L.weight_offset, L.out, L.in);
    ConstVectorMap b(params.data() + L.bias_offset, L.out);
    Matrix& z = tape.activations[li + 1];
    z.noalias() = w * tape.activations[li];
    z.colwise() += b;
    if (li + 1 < layers_.size()) z = z.array().tanh();
  }
  return tape.activations.back();
}

void Mlp::backward_batch(std::span<const double> params, const Tape& tape, const Matrix& d_out,
                         std::span<double> grad) const {
  Matrix delta = d_out;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& L = layers_[li];
    if (li + 1 < layers_.size()) {
      // tanh'(z) = 1 - tanh(z)^2, with tanh(z) stored as the activation.
      delta.array() *= 1.0 - tape.activations[li + 1].array().square();
    }
    Eigen::Map<Matrix> gw(grad.data() + L.weight_offset, L.out, L.in);
    Eigen::Map<Vector> gb(grad.data() + L.bias_offset, L.out);
    gw.noalias() += delta * tape.activations[li].transpose();
    gb += delta.rowwise().sum();
    if (li > 0) {
      ConstMatrixMap w(params.data() + L.weight_offset, L.out, L.in);
      Matrix next = w.transpose() * delta;
      delta = std::move(next);
    }
  }
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.epsilon);
  }
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void softmax(std::span<const double> logits, std::span<double> probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] /= sum;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::uint64_t parameter_hash(std::span<const double> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double p : params) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &p, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace espsim::nn
