#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "iada/random.hpp"

namespace iada {

// Raised when a caller breaks an operation's precondition (shape mismatch,
// empty batch, out-of-range label).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;

  std::size_t in() const { return weight.cols; }
  std::size_t out() const { return weight.rows; }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Fully-connected classifier: ReLU after every layer except the last, whose
// outputs are the logits.
struct ModelParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
  std::size_t class_count() const { return layers.empty() ? 0 : layers.back().out(); }
  std::size_t hidden_layer_count() const { return layers.empty() ? 0 : layers.size() - 1; }
  std::size_t hidden_neuron_count() const;
  std::size_t parameter_count() const;

  // Layer widths, input first: {in, h1, ..., classes}.
  std::vector<std::size_t> dims() const;

  // Throws ContractViolation unless dimensions chain, biases match and every
  // value is finite.
  void validate() const;

  // Visits every weight then bias, layer by layer, in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    for (auto& layer : layers) {
      for (double& w : layer.weight.data) f(w);
      for (double& b : layer.bias) f(b);
    }
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& layer : layers) {
      for (double w : layer.weight.data) f(w);
      for (double b : layer.bias) f(b);
    }
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Gradients share the parameter layout.
using Gradient = ModelParams;

struct Sample {
  std::vector<double> x;
  int y = 0;
};

// Uniform Glorot init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ModelParams init_params(std::span<const std::size_t> dims, Rng& rng);

ModelParams zeros_like(const ModelParams& params);

std::vector<double> forward(const ModelParams& params, std::span<const double> x);

// Hidden pre-activations of every layer plus the logits, for callers that
// need the activation pattern at a point.
struct ForwardTrace {
  std::vector<std::vector<double>> pre;   // pre[k] = W_k a_{k-1} + b_k
  std::vector<std::vector<double>> post;  // post[0] = x, post[k] = relu(pre[k-1])
  std::vector<double> logits() const { return pre.back(); }
};
ForwardTrace forward_trace(const ModelParams& params, std::span<const double> x);

// Argmax with the lowest index winning exact ties.
int argmax(std::span<const double> values);
int predict(const ModelParams& params, std::span<const double> x);

// -log softmax(logits)[y], evaluated with a max shift.
double cross_entropy(std::span<const double> logits, int y);

// Gradient of cross_entropy with respect to the logits: softmax - onehot(y).
std::vector<double> cross_entropy_grad(std::span<const double> logits, int y);

double mean_loss(const ModelParams& params, std::span<const Sample> batch);
double mean_loss(const ModelParams& params, std::span<const Sample* const> batch);

// Gradient of the mean cross-entropy over the batch.
Gradient backward(const ModelParams& params, std::span<const Sample> batch);
Gradient backward(const ModelParams& params, std::span<const Sample* const> batch);

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Gradient first_moment;
  Gradient second_moment;
  std::uint64_t step = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(const ModelParams& params, AdamConfig cfg)
      : first_moment(zeros_like(params)), second_moment(zeros_like(params)), config(cfg) {}
};

void adam_step(ModelParams& params, const Gradient& grad, AdamState& state);

// Euclidean norm over every coordinate.
double l2_norm(const Gradient& grad);

}  // namespace iada
