#pragma once

// Straight-line long double reference for forward passes, cross-entropy,
// interval bounds and the pessimized loss. Shares nothing with the library
// beyond the ModelParams layout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "iada/nn.hpp"

namespace oracle {

using LD = long double;

struct RefForward {
  std::vector<LD> logits;
  std::vector<std::int8_t> pattern;  // sign of every hidden pre-activation
};

inline RefForward ref_forward(const iada::ModelParams& p, const std::vector<double>& x) {
  std::vector<LD> a(x.begin(), x.end());
  RefForward out;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& L = p.layers[k];
    std::vector<LD> z(L.weight.rows);
    for (std::size_t i = 0; i < L.weight.rows; ++i) {
      LD s = L.bias[i];
      for (std::size_t j = 0; j < L.weight.cols; ++j) s += static_cast<LD>(L.weight.data[i * L.weight.cols + j]) * a[j];
      z[i] = s;
    }
    if (k + 1 < p.layers.size()) {
      for (auto& v : z) {
        out.pattern.push_back(v > 0 ? 1 : (v < 0 ? -1 : 0));
        v = v > 0 ? v : 0;
      }
    }
    a = std::move(z);
  }
  out.logits = std::move(a);
  return out;
}

inline LD ref_cross_entropy(const std::vector<LD>& logits, int y) {
  const auto top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  LD rest = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != top) rest += std::exp(logits[j] - logits[top]);
  }
  return std::log1p(rest) + (logits[top] - logits[static_cast<std::size_t>(y)]);
}

struct RefBounds {
  std::vector<std::vector<LD>> lo, hi;  // per hidden layer, pre-activation
  std::vector<LD> logit_lo, logit_hi;
  std::vector<std::int8_t> pattern;  // phase of every hidden neuron: -1, 0 (unstable), 1
};

// Plain lower/upper interval arithmetic: W+ hi + W- lo.
inline RefBounds ref_bounds(const iada::ModelParams& p, const std::vector<double>& x0, double eps,
                            const std::vector<double>& dom_lo, const std::vector<double>& dom_hi) {
  std::vector<LD> lo(x0.size()), hi(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    lo[i] = std::max<LD>(static_cast<LD>(x0[i]) - eps, dom_lo[i]);
    hi[i] = std::min<LD>(static_cast<LD>(x0[i]) + eps, dom_hi[i]);
  }
  RefBounds out;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& L = p.layers[k];
    std::vector<LD> zl(L.weight.rows), zh(L.weight.rows);
    for (std::size_t i = 0; i < L.weight.rows; ++i) {
      LD sl = L.bias[i], sh = L.bias[i];
      for (std::size_t j = 0; j < L.weight.cols; ++j) {
        const LD w = L.weight.data[i * L.weight.cols + j];
        if (w >= 0) {
          sl += w * lo[j];
          sh += w * hi[j];
        } else {
          sl += w * hi[j];
          sh += w * lo[j];
        }
      }
      zl[i] = sl;
      zh[i] = sh;
    }
    if (k + 1 < p.layers.size()) {
      out.lo.push_back(zl);
      out.hi.push_back(zh);
      for (std::size_t i = 0; i < zl.size(); ++i) {
        out.pattern.push_back(zl[i] >= 0 ? 1 : (zh[i] <= 0 ? -1 : 0));
        out.pattern.push_back(zl[i] > 0 ? 1 : -1);
        out.pattern.push_back(zh[i] > 0 ? 1 : -1);
        zl[i] = std::max<LD>(zl[i], 0);
        zh[i] = std::max<LD>(zh[i], 0);
      }
    }
    lo = std::move(zl);
    hi = std::move(zh);
  }
  out.logit_lo = std::move(lo);
  out.logit_hi = std::move(hi);
  return out;
}

inline LD ref_robust_ce(const iada::ModelParams& p, const iada::Sample& s, double eps, const std::vector<double>& dom_lo,
                        const std::vector<double>& dom_hi, std::vector<std::int8_t>* pattern = nullptr) {
  auto b = ref_bounds(p, s.x, eps, dom_lo, dom_hi);
  std::vector<LD> z = b.logit_hi;
  z[static_cast<std::size_t>(s.y)] = b.logit_lo[static_cast<std::size_t>(s.y)];
  if (pattern) pattern->insert(pattern->end(), b.pattern.begin(), b.pattern.end());
  return ref_cross_entropy(z, s.y);
}

// Loss plus a signature of every piecewise choice the loss depends on.
using PiecewiseLoss = std::function<LD(const iada::ModelParams&, std::vector<std::int8_t>&)>;

struct FdComparison {
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  double worst_rel_err = 0.0;
};

// Central differences in long double; coordinates whose +-h probes change
// the piecewise signature are skipped, as are |g| <= floor on both sides.
inline FdComparison compare_fd(const iada::ModelParams& params, const iada::Gradient& analytic, const PiecewiseLoss& loss,
                               double h = 1e-5, double floor = 1e-6) {
  FdComparison out;
  std::vector<double> grad_flat;
  analytic.for_each([&](double g) { grad_flat.push_back(g); });
  iada::ModelParams probe = params;
  std::vector<double*> coords;
  probe.for_each([&](double& v) { coords.push_back(&v); });
  std::vector<std::int8_t> base_sig;
  loss(params, base_sig);
  for (std::size_t c = 0; c < coords.size(); ++c) {
    const double orig = *coords[c];
    std::vector<std::int8_t> sp, sm;
    const double up = orig + h, down = orig - h;
    *coords[c] = up;
    const LD fp = loss(probe, sp);
    *coords[c] = down;
    const LD fm = loss(probe, sm);
    *coords[c] = orig;
    if (sp != base_sig || sm != base_sig) {
      ++out.skipped_kinks;
      continue;
    }
    const double fd = static_cast<double>((fp - fm) / (static_cast<LD>(up) - static_cast<LD>(down)));
    const double a = grad_flat[c];
    const double scale = std::max(std::abs(fd), std::abs(a));
    if (scale <= floor) continue;
    ++out.checked;
    out.worst_rel_err = std::max(out.worst_rel_err, std::abs(fd - a) / scale);
  }
  return out;
}

}  // namespace oracle
