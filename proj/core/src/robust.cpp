#include "iada/robust.hpp"

#include <cmath>
#include <string>

#include "dense_ops.hpp"

namespace iada {

namespace {

// Center-radius interval propagation. centers[0]/radii[0] describe the input
// box; centers[k] for k >= 1 are post-activation boxes of hidden layers.
struct IntervalTrace {
  std::vector<std::vector<double>> centers, radii;
  std::vector<std::vector<double>> pre_lower, pre_upper;  // every layer
};

void check(const ModelParams& params, const Sample& s, double epsilon, const InputBox& domain) {
  if (params.layers.empty()) throw ContractViolation("model has no layers");
  if (s.x.size() != params.input_dim() || domain.dim() != params.input_dim()) {
    throw ContractViolation("robust bound dimension mismatch");
  }
  if (s.y < 0 || static_cast<std::size_t>(s.y) >= params.class_count()) {
    throw ContractViolation("sample label out of range");
  }
  if (!(epsilon >= 0.0)) throw ContractViolation("epsilon must be non-negative, got " + std::to_string(epsilon));
}

IntervalTrace propagate(const ModelParams& params, std::span<const double> x, double epsilon,
                        const InputBox& domain) {
  IntervalTrace t;
  std::vector<double> c(x.size()), r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lo = std::max(domain.lower[i], x[i] - epsilon);
    const double hi = std::min(domain.upper[i], x[i] + epsilon);
    c[i] = (lo + hi) / 2.0;
    r[i] = (hi - lo) / 2.0;
  }
  t.centers.push_back(std::move(c));
  t.radii.push_back(std::move(r));
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    std::vector<double> mu(layer.out()), rho(layer.out());
    detail::affine(layer, t.centers.back(), mu);
    detail::abs_matvec(layer, t.radii.back(), rho);
    std::vector<double> lo(layer.out()), hi(layer.out());
    for (std::size_t j = 0; j < mu.size(); ++j) {
      lo[j] = mu[j] - rho[j];
      hi[j] = mu[j] + rho[j];
    }
    if (k + 1 < params.layers.size()) {
      std::vector<double> ac(mu.size()), ar(mu.size());
      for (std::size_t j = 0; j < mu.size(); ++j) {
        const double la = lo[j] > 0.0 ? lo[j] : 0.0;
        const double ua = hi[j] > 0.0 ? hi[j] : 0.0;
        ac[j] = (la + ua) / 2.0;
        ar[j] = (ua - la) / 2.0;
      }
      t.centers.push_back(std::move(ac));
      t.radii.push_back(std::move(ar));
    }
    t.pre_lower.push_back(std::move(lo));
    t.pre_upper.push_back(std::move(hi));
  }
  return t;
}

std::vector<double> pessimize(const IntervalTrace& t, int y) {
  std::vector<double> z = t.pre_upper.back();
  z[y] = t.pre_lower.back()[y];
  return z;
}

void accumulate(const ModelParams& params, const Sample& s, double epsilon, const InputBox& domain,
                Gradient& grad) {
  const IntervalTrace t = propagate(params, s.x, epsilon, domain);
  const std::vector<double> g = cross_entropy_grad(pessimize(t, s.y), s.y);
  // lower_y = mu_y - rho_y, upper_j = mu_j + rho_j
  std::vector<double> dmu = g, drho = g;
  drho[s.y] = -g[s.y];
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const auto& layer = params.layers[k];
    auto& gl = grad.layers[k];
    detail::outer_add(gl, dmu, t.centers[k]);
    // rho' = |W| rho  ->  dW += sign(W) * (drho' rho^T)
    const auto& rho = t.radii[k];
    for (std::size_t r = 0; r < layer.out(); ++r) {
      if (drho[r] == 0.0) continue;
      const auto w = layer.weight.row(r);
      auto gw = gl.weight.row(r);
      for (std::size_t c = 0; c < w.size(); ++c) {
        if (rho[c] == 0.0) continue;
        gw[c] += (w[c] < 0.0 ? -drho[r] : drho[r]) * rho[c];
      }
    }
    if (k == 0) break;
    std::vector<double> dmu_a(layer.in(), 0.0), drho_a(layer.in(), 0.0);
    detail::transpose_matvec_add(layer, dmu, dmu_a);
    for (std::size_t r = 0; r < layer.out(); ++r) {
      if (drho[r] == 0.0) continue;
      const auto w = layer.weight.row(r);
      for (std::size_t c = 0; c < w.size(); ++c) drho_a[c] += (w[c] < 0.0 ? -w[c] : w[c]) * drho[r];
    }
    // through relu on [lo, hi]: mu_a = (relu(lo)+relu(hi))/2, rho_a = (relu(hi)-relu(lo))/2
    const auto& lo = t.pre_lower[k - 1];
    const auto& hi = t.pre_upper[k - 1];
    dmu.assign(layer.in(), 0.0);
    drho.assign(layer.in(), 0.0);
    for (std::size_t i = 0; i < layer.in(); ++i) {
      const double il = lo[i] > 0.0 ? 1.0 : 0.0;
      const double iu = hi[i] > 0.0 ? 1.0 : 0.0;
      const double dlo = (dmu_a[i] - drho_a[i]) / 2.0 * il;
      const double dhi = (dmu_a[i] + drho_a[i]) / 2.0 * iu;
      if (il == iu) {
        // both ends on the same side; keep the center path exact
        dmu[i] = dmu_a[i] * il;
        drho[i] = drho_a[i] * il;
      } else {
        dmu[i] = dlo + dhi;
        drho[i] = dhi - dlo;
      }
    }
  }
}

template <typename Get>
Gradient backward_impl(const ModelParams& params, std::size_t n, double epsilon, const InputBox& domain, Get get) {
  if (n == 0) throw ContractViolation("robust_backward on an empty batch");
  Gradient grad = zeros_like(params);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = get(i);
    check(params, s, epsilon, domain);
    accumulate(params, s, epsilon, domain, grad);
  }
  detail::scale(grad, 1.0 / static_cast<double>(n));
  return grad;
}

template <typename Get>
double loss_impl(const ModelParams& params, std::size_t n, double epsilon, const InputBox& domain, Get get) {
  if (n == 0) throw ContractViolation("robust_loss of an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = get(i);
    check(params, s, epsilon, domain);
    total += cross_entropy(pessimize(propagate(params, s.x, epsilon, domain), s.y), s.y);
  }
  return total / static_cast<double>(n);
}

double pad(double v) { return 1e-12 * (1.0 + std::abs(v)); }

}  // namespace

WorstCaseLogits worst_case_logits(const ModelParams& params, const Sample& sample, double epsilon,
                                  const InputBox& domain) {
  check(params, sample, epsilon, domain);
  const IntervalTrace t = propagate(params, sample.x, epsilon, domain);
  WorstCaseLogits w;
  w.label = sample.y;
  w.lower = t.pre_lower.back();
  w.upper = t.pre_upper.back();
  for (double& v : w.lower) v -= pad(v);
  for (double& v : w.upper) v += pad(v);
  w.margins.resize(w.lower.size());
  for (std::size_t j = 0; j < w.lower.size(); ++j) {
    w.margins[j] = static_cast<int>(j) == sample.y ? 0.0 : w.lower[sample.y] - w.upper[j];
  }
  return w;
}

std::vector<double> pessimized_logits(const ModelParams& params, const Sample& sample, double epsilon,
                                      const InputBox& domain) {
  check(params, sample, epsilon, domain);
  return pessimize(propagate(params, sample.x, epsilon, domain), sample.y);
}

double robust_loss(const ModelParams& params, std::span<const Sample> batch, double epsilon, const InputBox& domain) {
  return loss_impl(params, batch.size(), epsilon, domain, [&](std::size_t i) -> const Sample& { return batch[i]; });
}

double robust_loss(const ModelParams& params, std::span<const Sample* const> batch, double epsilon,
                   const InputBox& domain) {
  return loss_impl(params, batch.size(), epsilon, domain, [&](std::size_t i) -> const Sample& { return *batch[i]; });
}

Gradient robust_backward(const ModelParams& params, std::span<const Sample> batch, double epsilon,
                         const InputBox& domain) {
  return backward_impl(params, batch.size(), epsilon, domain,
                       [&](std::size_t i) -> const Sample& { return batch[i]; });
}

Gradient robust_backward(const ModelParams& params, std::span<const Sample* const> batch, double epsilon,
                         const InputBox& domain) {
  return backward_impl(params, batch.size(), epsilon, domain,
                       [&](std::size_t i) -> const Sample& { return *batch[i]; });
}

}  // namespace iada
