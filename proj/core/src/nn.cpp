#include "iada/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dense_ops.hpp"

namespace iada {

std::size_t ModelParams::hidden_neuron_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < layers.size(); ++k) n += layers[k].out();
  return n;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.data.size() + layer.bias.size();
  return n;
}

std::vector<std::size_t> ModelParams::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().in());
  for (const auto& layer : layers) d.push_back(layer.out());
  return d;
}

void ModelParams::validate() const {
  if (layers.empty()) throw ContractViolation("model has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    if (layer.weight.rows == 0 || layer.weight.cols == 0) {
      throw ContractViolation("layer " + std::to_string(k) + " is empty");
    }
    if (layer.weight.data.size() != layer.weight.rows * layer.weight.cols) {
      throw ContractViolation("layer " + std::to_string(k) + " weight storage mismatch");
    }
    if (layer.bias.size() != layer.out()) {
      throw ContractViolation("layer " + std::to_string(k) + " bias length mismatch");
    }
    if (k > 0 && layers[k - 1].out() != layer.in()) {
      throw ContractViolation("layer " + std::to_string(k) + " input width does not chain");
    }
  }
  bool finite = true;
  for_each([&finite](double v) { finite = finite && std::isfinite(v); });
  if (!finite) throw ContractViolation("model has non-finite parameters");
}

ModelParams init_params(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw ContractViolation("need at least input and output widths");
  ModelParams params;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t in = dims[k], out = dims[k + 1];
    if (in == 0 || out == 0) throw ContractViolation("zero-width layer");
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.data) w = rng.uniform(-limit, limit);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  z.for_each([](double& v) { v = 0.0; });
  return z;
}

namespace {

void check_input(const ModelParams& params, std::span<const double> x) {
  if (params.layers.empty()) throw ContractViolation("model has no layers");
  if (x.size() != params.input_dim()) {
    throw ContractViolation("input has dimension " + std::to_string(x.size()) + ", model expects " +
                            std::to_string(params.input_dim()));
  }
}

}  // namespace

std::vector<double> forward(const ModelParams& params, std::span<const double> x) {
  check_input(params, x);
  std::vector<double> cur(x.begin(), x.end()), next;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    next.assign(layer.out(), 0.0);
    detail::affine(layer, cur, next);
    if (k + 1 < params.layers.size()) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    }
    cur.swap(next);
  }
  return cur;
}

ForwardTrace forward_trace(const ModelParams& params, std::span<const double> x) {
  check_input(params, x);
  ForwardTrace t;
  t.post.emplace_back(x.begin(), x.end());
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    std::vector<double> z(layer.out());
    detail::affine(layer, t.post.back(), z);
    if (k + 1 < params.layers.size()) {
      std::vector<double> a(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
      t.post.push_back(std::move(a));
    }
    t.pre.push_back(std::move(z));
  }
  return t;
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

int predict(const ModelParams& params, std::span<const double> x) {
  return argmax(forward(params, x));
}

double cross_entropy(std::span<const double> logits, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= logits.size()) {
    throw ContractViolation("label out of range");
  }
  const auto top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  const double shift = logits[top];
  // log1p keeps relative accuracy when the loss is tiny
  double rest = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != top) rest += std::exp(logits[j] - shift);
  }
  return std::log1p(rest) + (shift - logits[static_cast<std::size_t>(y)]);
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= logits.size()) {
    throw ContractViolation("label out of range");
  }
  const double shift = *std::max_element(logits.begin(), logits.end());
  std::vector<double> g(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    g[i] = std::exp(logits[i] - shift);
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  g[y] -= 1.0;
  return g;
}

namespace {

void check_sample(const ModelParams& params, const Sample& s) {
  if (s.x.size() != params.input_dim()) throw ContractViolation("sample dimension mismatch");
  if (s.y < 0 || static_cast<std::size_t>(s.y) >= params.class_count()) {
    throw ContractViolation("sample label out of range");
  }
}

void accumulate(const ModelParams& params, const Sample& s, Gradient& grad) {
  const ForwardTrace t = forward_trace(params, s.x);
  std::vector<double> g = cross_entropy_grad(t.pre.back(), s.y);
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const auto& layer = params.layers[k];
    detail::outer_add(grad.layers[k], g, t.post[k]);
    if (k == 0) break;
    std::vector<double> prev(layer.in(), 0.0);
    detail::transpose_matvec_add(layer, g, prev);
    const auto& z = t.pre[k - 1];
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (!(z[i] > 0.0)) prev[i] = 0.0;
    }
    g.swap(prev);
  }
}

template <typename Get>
Gradient backward_impl(const ModelParams& params, std::size_t n, Get get) {
  if (n == 0) throw ContractViolation("backward on an empty batch");
  Gradient grad = zeros_like(params);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = get(i);
    check_sample(params, s);
    accumulate(params, s, grad);
  }
  detail::scale(grad, 1.0 / static_cast<double>(n));
  return grad;
}

template <typename Get>
double mean_loss_impl(const ModelParams& params, std::size_t n, Get get) {
  if (n == 0) throw ContractViolation("loss of an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = get(i);
    check_sample(params, s);
    total += cross_entropy(forward(params, s.x), s.y);
  }
  return total / static_cast<double>(n);
}

}  // namespace

Gradient backward(const ModelParams& params, std::span<const Sample> batch) {
  return backward_impl(params, batch.size(), [&](std::size_t i) -> const Sample& { return batch[i]; });
}

Gradient backward(const ModelParams& params, std::span<const Sample* const> batch) {
  return backward_impl(params, batch.size(), [&](std::size_t i) -> const Sample& { return *batch[i]; });
}

double mean_loss(const ModelParams& params, std::span<const Sample> batch) {
  return mean_loss_impl(params, batch.size(), [&](std::size_t i) -> const Sample& { return batch[i]; });
}

double mean_loss(const ModelParams& params, std::span<const Sample* const> batch) {
  return mean_loss_impl(params, batch.size(), [&](std::size_t i) -> const Sample& { return *batch[i]; });
}

void adam_step(ModelParams& params, const Gradient& grad, AdamState& state) {
  if (params.dims() != grad.dims() || params.dims() != state.first_moment.dims() ||
      params.dims() != state.second_moment.dims()) {
    throw ContractViolation("adam_step shape mismatch");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        const double mhat = m[i] / correct1;
        const double vhat = v[i] / correct2;
        p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
      }
    };
    update(params.layers[k].weight.data, grad.layers[k].weight.data,
           state.first_moment.layers[k].weight.data, state.second_moment.layers[k].weight.data);
    update(params.layers[k].bias, grad.layers[k].bias, state.first_moment.layers[k].bias,
           state.second_moment.layers[k].bias);
  }
}

double l2_norm(const Gradient& grad) {
  double s = 0.0;
  grad.for_each([&s](double v) { s += v * v; });
  return std::sqrt(s);
}

}  // namespace iada
