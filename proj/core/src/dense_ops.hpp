#pragma once

// Shared inner loops. Every path that must agree bit-for-bit with forward()
// (interval propagation at zero radius, the robust loss) goes through these.

#include <span>

#include "iada/nn.hpp"

namespace iada::detail {

inline void affine(const DenseLayer& layer, std::span<const double> x, std::span<double> out) {
  const std::size_t cols = layer.weight.cols;
  const double* w = layer.weight.data.data();
  for (std::size_t r = 0; r < layer.weight.rows; ++r, w += cols) {
    double s = layer.bias[r];
    for (std::size_t c = 0; c < cols; ++c) s += w[c] * x[c];
    out[r] = s;
  }
}

// out = |W| x, no bias.
inline void abs_matvec(const DenseLayer& layer, std::span<const double> x, std::span<double> out) {
  const std::size_t cols = layer.weight.cols;
  const double* w = layer.weight.data.data();
  for (std::size_t r = 0; r < layer.weight.rows; ++r, w += cols) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += (w[c] < 0 ? -w[c] : w[c]) * x[c];
    out[r] = s;
  }
}

// out += W^T g
inline void transpose_matvec_add(const DenseLayer& layer, std::span<const double> g,
                                 std::span<double> out) {
  const std::size_t cols = layer.weight.cols;
  const double* w = layer.weight.data.data();
  for (std::size_t r = 0; r < layer.weight.rows; ++r, w += cols) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) out[c] += w[c] * gr;
  }
}

// grad_W += g x^T, grad_b += g
inline void outer_add(DenseLayer& grad, std::span<const double> g, std::span<const double> x) {
  const std::size_t cols = grad.weight.cols;
  double* w = grad.weight.data.data();
  for (std::size_t r = 0; r < grad.weight.rows; ++r, w += cols) {
    const double gr = g[r];
    grad.bias[r] += gr;
    if (gr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) w[c] += gr * x[c];
  }
}

inline void scale(Gradient& grad, double factor) {
  grad.for_each([factor](double& v) { v *= factor; });
}

}  // namespace iada::detail
