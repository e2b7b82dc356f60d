#include "iada/verifier.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <queue>
#include <thread>

#include <nlohmann/json.hpp>

#include "dense_ops.hpp"

namespace iada {

NeuronPhase ActivationBounds::phase(std::size_t layer, std::size_t neuron) const {
  if (lower[layer][neuron] >= 0.0) return NeuronPhase::kActive;
  if (upper[layer][neuron] <= 0.0) return NeuronPhase::kInactive;
  return NeuronPhase::kUnstable;
}

std::size_t ActivationBounds::unstable_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < lower.size(); ++k) {
    for (std::size_t j = 0; j < lower[k].size(); ++j) n += phase(k, j) == NeuronPhase::kUnstable;
  }
  return n;
}

std::string_view to_string(VerifyStatus status) {
  switch (status) {
    case VerifyStatus::kRobustWithin: return "robust_within";
    case VerifyStatus::kFound: return "found";
    case VerifyStatus::kRootMisclassified: return "root_misclassified";
    case VerifyStatus::kTimeout: return "timeout";
  }
  return "unknown";
}

namespace {

// Outward padding that absorbs rounding in the interval sums.
double pad(double v) { return 1e-12 * (1.0 + std::abs(v)); }

struct Propagation {
  // Pre-activation intervals for every layer, the output layer last.
  std::vector<std::vector<double>> lo, hi;
  bool feasible = true;
};

// Interval arithmetic through the network. `forced` holds one phase per
// hidden neuron (flattened, may be empty); a forced phase contradicting the
// interval marks the region infeasible.
Propagation propagate(const ModelParams& params, std::span<const double> in_lo,
                      std::span<const double> in_hi, std::span<const std::int8_t> forced) {
  Propagation out;
  std::vector<double> lo(in_lo.begin(), in_lo.end()), hi(in_hi.begin(), in_hi.end());
  std::size_t offset = 0;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    std::vector<double> zlo(layer.out()), zhi(layer.out());
    for (std::size_t r = 0; r < layer.out(); ++r) {
      const auto w = layer.weight.row(r);
      double slo = layer.bias[r], shi = layer.bias[r];
      for (std::size_t c = 0; c < w.size(); ++c) {
        if (w[c] >= 0.0) {
          slo += w[c] * lo[c];
          shi += w[c] * hi[c];
        } else {
          slo += w[c] * hi[c];
          shi += w[c] * lo[c];
        }
      }
      zlo[r] = slo - pad(slo);
      zhi[r] = shi + pad(shi);
    }
    if (k + 1 < params.layers.size()) {
      lo.assign(layer.out(), 0.0);
      hi.assign(layer.out(), 0.0);
      for (std::size_t j = 0; j < layer.out(); ++j) {
        const std::int8_t f = forced.empty() ? 0 : forced[offset + j];
        if (f > 0 && zhi[j] < 0.0) out.feasible = false;
        if (f < 0 && zlo[j] > 0.0) out.feasible = false;
        if (f >= 0) {
          lo[j] = std::max(zlo[j], 0.0);
          hi[j] = std::max(zhi[j], 0.0);
        }
      }
      offset += layer.out();
    }
    out.lo.push_back(std::move(zlo));
    out.hi.push_back(std::move(zhi));
  }
  return out;
}

void ball_box(std::span<const double> x0, double radius, const InputBox& domain, std::vector<double>& lo,
              std::vector<double>& hi) {
  lo.resize(x0.size());
  hi.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    lo[i] = std::max(domain.lower[i], x0[i] - radius);
    hi[i] = std::min(domain.upper[i], x0[i] + radius);
  }
}

double linf(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Affine expression over the node LP's variables.
struct Expr {
  std::vector<double> coeffs;  // empty means identically `constant`
  double constant = 0.0;

  double eval(std::span<const double> x) const {
    double s = constant;
    for (std::size_t i = 0; i < coeffs.size(); ++i) s += coeffs[i] * x[i];
    return s;
  }
};

struct UnstableVar {
  std::size_t neuron = 0;  // flattened hidden index
  std::size_t column = 0;
  Expr pre;
};

// One branch-and-bound node's relaxation. Columns: the input offsets d
// (x = x0 + d), one post-activation per unstable neuron, then the radius r
// (direct) or the worst slack s (parametric).
struct NodeModel {
  lp::LinearProgram lp;
  std::size_t n_in = 0;
  std::size_t extra = 0;
  std::vector<UnstableVar> unstable;
  std::vector<double> margin_gradient;  // margin coefficients on d
  bool parametric = false;
};

struct QueryContext {
  const ModelParams& params;
  std::span<const double> x0;
  int root_label;
  const InputBox& domain;
  const VerifierOptions& opts;
  std::vector<double> dom_lo, dom_hi;  // domain relative to x0: L <= d <= U
};

NodeModel build_node(const QueryContext& q, const Propagation& prop, std::span<const std::int8_t> forced,
                     int target, double radius, bool parametric) {
  const ModelParams& params = q.params;
  NodeModel node;
  node.parametric = parametric;
  node.n_in = params.input_dim();

  // Effective phase per hidden neuron; rows are needed only where a forced
  // phase is not already implied by the bounds.
  std::size_t n_unstable = 0;
  {
    std::size_t offset = 0;
    for (std::size_t k = 0; k + 1 < params.layers.size(); ++k) {
      for (std::size_t j = 0; j < params.layers[k].out(); ++j) {
        if (forced[offset + j] == 0 && prop.lo[k][j] < 0.0 && prop.hi[k][j] > 0.0) ++n_unstable;
      }
      offset += params.layers[k].out();
    }
  }
  const std::size_t nvars = node.n_in + n_unstable + 1;
  node.extra = nvars - 1;

  auto& lp = node.lp;
  lp.objective.assign(nvars, 0.0);
  lp.lower.assign(nvars, 0.0);
  lp.upper.assign(nvars, 0.0);
  lp.rows.cols = nvars;
  for (std::size_t i = 0; i < node.n_in; ++i) {
    lp.lower[i] = std::max(q.dom_lo[i], -radius);
    lp.upper[i] = std::min(q.dom_hi[i], radius);
  }
  if (parametric) {
    lp.objective[node.extra] = -1.0;
    lp.lower[node.extra] = -lp::kInf;
    lp.upper[node.extra] = lp::kInf;
  } else {
    lp.objective[node.extra] = 1.0;
    lp.lower[node.extra] = 0.0;
    lp.upper[node.extra] = radius;
  }

  std::vector<double> row(nvars);
  auto emit = [&](const Expr& e, double sign, double slack_coeff, lp::RowSense sense, double rhs) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t i = 0; i < e.coeffs.size(); ++i) row[i] = sign * e.coeffs[i];
    row[node.extra] += slack_coeff;
    lp.add_row(row, sense, rhs);
  };
  const double s_coeff = parametric ? 1.0 : 0.0;

  // Post-activation expressions of the previous layer; layer 0 is x0 + d.
  std::vector<Expr> post;
  std::size_t next_col = node.n_in;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    std::vector<Expr> pre(layer.out());
    for (std::size_t r = 0; r < layer.out(); ++r) {
      const auto w = layer.weight.row(r);
      Expr& e = pre[r];
      e.coeffs.assign(nvars, 0.0);
      e.constant = layer.bias[r];
      if (k == 0) {
        for (std::size_t c = 0; c < w.size(); ++c) {
          e.coeffs[c] = w[c];
          e.constant += w[c] * q.x0[c];
        }
      } else {
        for (std::size_t c = 0; c < w.size(); ++c) {
          const Expr& p = post[c];
          if (w[c] == 0.0) continue;
          e.constant += w[c] * p.constant;
          for (std::size_t v = 0; v < p.coeffs.size(); ++v) e.coeffs[v] += w[c] * p.coeffs[v];
        }
      }
    }
    if (k + 1 == params.layers.size()) {
      // margin = logit_t - logit_y >= flip_margin
      Expr margin;
      margin.coeffs.assign(nvars, 0.0);
      const Expr& et = pre[target];
      const Expr& ey = pre[q.root_label];
      for (std::size_t v = 0; v < nvars; ++v) margin.coeffs[v] = et.coeffs[v] - ey.coeffs[v];
      margin.constant = et.constant - ey.constant;
      node.margin_gradient.assign(margin.coeffs.begin(), margin.coeffs.begin() + static_cast<std::ptrdiff_t>(node.n_in));
      // parametric: s - margin <= c - k ; direct: -margin <= c - k
      emit(margin, -1.0, s_coeff, lp::RowSense::kLessEqual, margin.constant - q.opts.flip_margin);
      break;
    }

    post.assign(layer.out(), Expr{});
    for (std::size_t j = 0; j < layer.out(); ++j) {
      const double l = prop.lo[k][j], u = prop.hi[k][j];
      const std::int8_t f = forced[offset + j];
      const bool stable_active = l >= 0.0;
      const bool stable_inactive = u <= 0.0;
      if (f > 0 || (f == 0 && stable_active)) {
        if (f > 0 && !stable_active) {
          // pre >= 0  ->  -pre (+ s) <= const
          emit(pre[j], -1.0, s_coeff, lp::RowSense::kLessEqual, pre[j].constant);
        }
        post[j] = pre[j];
      } else if (f < 0 || (f == 0 && stable_inactive)) {
        if (f < 0 && !stable_inactive) {
          // pre <= 0  ->  pre (+ s) <= -const
          emit(pre[j], 1.0, s_coeff, lp::RowSense::kLessEqual, -pre[j].constant);
        }
        post[j] = Expr{};
      } else {
        const std::size_t col = next_col++;
        lp.lower[col] = 0.0;
        lp.upper[col] = u;
        // a >= pre  ->  pre - a <= -const
        emit(pre[j], 1.0, 0.0, lp::RowSense::kLessEqual, -pre[j].constant);
        lp.rows(lp.rows.rows - 1, col) -= 1.0;
        // a <= u (pre - l) / (u - l)
        const double lambda = u / (u - l);
        emit(pre[j], -lambda, 0.0, lp::RowSense::kLessEqual, lambda * (pre[j].constant - l));
        lp.rows(lp.rows.rows - 1, col) += 1.0;
        node.unstable.push_back({offset + j, col, pre[j]});
        Expr a;
        a.coeffs.assign(nvars, 0.0);
        a.coeffs[col] = 1.0;
        post[j] = std::move(a);
      }
    }
    offset += layer.out();
  }

  if (!parametric) {
    // |d_i| <= r where the domain does not already imply it
    for (std::size_t i = 0; i < node.n_in; ++i) {
      if (q.dom_hi[i] > 0.0) {
        std::fill(row.begin(), row.end(), 0.0);
        row[i] = 1.0;
        row[node.extra] = -1.0;
        lp.add_row(row, lp::RowSense::kLessEqual, 0.0);
      }
      if (q.dom_lo[i] < 0.0) {
        std::fill(row.begin(), row.end(), 0.0);
        row[i] = -1.0;
        row[node.extra] = -1.0;
        lp.add_row(row, lp::RowSense::kLessEqual, 0.0);
      }
    }
  }
  return node;
}

struct NodeSolve {
  enum class Kind { kBounded, kInfeasible, kFailed } kind = Kind::kFailed;
  double lower_bound = 0.0;
  std::vector<double> x;  // LP point
};

void set_radius_bounds(NodeModel& node, const QueryContext& q, double r) {
  for (std::size_t i = 0; i < node.n_in; ++i) {
    node.lp.lower[i] = std::max(q.dom_lo[i], -r);
    node.lp.upper[i] = std::min(q.dom_hi[i], r);
  }
}

NodeSolve solve_direct(NodeModel& node, const VerifierOptions& opts) {
  NodeSolve out;
  lp::LpSolution sol = lp::solve_lp(node.lp, opts.lp);
  if (sol.status == lp::LpStatus::kInfeasible) {
    out.kind = NodeSolve::Kind::kInfeasible;
  } else if (sol.optimal()) {
    out.kind = NodeSolve::Kind::kBounded;
    out.lower_bound = sol.x[node.extra];
    out.x = std::move(sol.x);
  }
  return out;
}

lp::Basis parametric_start(const NodeModel& node) {
  lp::Basis b;
  const std::size_t n = node.lp.variable_count();
  b.status.assign(n + node.lp.row_count(), lp::VarStatus::kBasic);
  for (std::size_t j = 0; j < n; ++j) b.status[j] = lp::VarStatus::kAtLower;
  for (std::size_t i = 0; i < node.n_in; ++i) {
    if (node.margin_gradient[i] > 0.0) b.status[i] = lp::VarStatus::kAtUpper;
  }
  b.status[node.extra] = lp::VarStatus::kFree;
  return b;
}

// V(r) = max worst-slack over the relaxation at radius r; V is concave and
// nondecreasing and the node's minimal radius is its smallest root.
struct ValueAt {
  bool ok = false;
  double value = 0.0;
  double slope = 0.0;
  std::vector<double> x;
};

ValueAt value_at(NodeModel& node, const QueryContext& q, double r, lp::Basis& basis) {
  ValueAt v;
  set_radius_bounds(node, q, r);
  lp::LpSolution sol = lp::solve_lp(node.lp, q.opts.lp, basis.empty() ? nullptr : &basis);
  if (!sol.optimal()) return v;
  basis = sol.basis;
  v.ok = true;
  v.value = -sol.objective;
  // Supergradient from the reduced costs of inputs sitting on a bound tied to r.
  for (std::size_t i = 0; i < node.n_in; ++i) {
    const lp::VarStatus s = sol.basis.status[i];
    if (s == lp::VarStatus::kAtUpper && r < q.dom_hi[i]) {
      v.slope += std::max(0.0, -sol.reduced_costs[i]);
    } else if (s == lp::VarStatus::kAtLower && r < -q.dom_lo[i]) {
      v.slope += std::max(0.0, sol.reduced_costs[i]);
    }
  }
  v.x = std::move(sol.x);
  return v;
}

constexpr double kValueTolerance = 1e-9;

NodeSolve solve_bisection(NodeModel& node, const QueryContext& q, double lo, double hi) {
  NodeSolve out;
  lp::Basis basis = parametric_start(node);
  ValueAt top = value_at(node, q, hi, basis);
  if (!top.ok) return out;
  if (top.value < -kValueTolerance) {
    out.kind = NodeSolve::Kind::kInfeasible;
    return out;
  }
  std::vector<double> best = std::move(top.x);
  while (hi - lo > q.opts.bisection_tolerance) {
    const double mid = 0.5 * (lo + hi);
    ValueAt v = value_at(node, q, mid, basis);
    if (!v.ok) return out;
    if (v.value >= -kValueTolerance) {
      hi = mid;
      best = std::move(v.x);
    } else {
      lo = mid;
    }
  }
  out.kind = NodeSolve::Kind::kBounded;
  out.lower_bound = lo;
  out.x = std::move(best);
  return out;
}

NodeSolve solve_parametric(NodeModel& node, const QueryContext& q, double start, double radius) {
  NodeSolve out;
  lp::Basis basis = parametric_start(node);
  double r = std::min(start, radius);
  for (int iter = 0; iter < 100; ++iter) {
    ValueAt v = value_at(node, q, r, basis);
    if (!v.ok) return out;
    if (v.value >= -kValueTolerance) {
      out.kind = NodeSolve::Kind::kBounded;
      out.lower_bound = r;
      out.x = std::move(v.x);
      return out;
    }
    if (v.slope <= 1e-15 || r >= radius) {
      out.kind = NodeSolve::Kind::kInfeasible;
      return out;
    }
    const double next = r - v.value / v.slope;
    if (next > radius) {
      // the root lies beyond the radius unless V(radius) says otherwise
      ValueAt top = value_at(node, q, radius, basis);
      if (!top.ok) return out;
      if (top.value < -kValueTolerance) {
        out.kind = NodeSolve::Kind::kInfeasible;
        return out;
      }
      return solve_bisection(node, q, r, radius);
    }
    if (next <= r + 1e-15 * (1.0 + r)) return solve_bisection(node, q, r, radius);
    r = next;
  }
  return solve_bisection(node, q, r, radius);
}

struct Incumbent {
  bool has = false;
  double delta = lp::kInf;
  std::vector<double> x;
  int cls = -1;
};

// Accepts x as incumbent if the network really changes its prediction;
// then shrinks it toward x0 along the segment while it still flips.
void offer_candidate(const QueryContext& q, std::vector<double> x, Incumbent& inc) {
  q.domain.clamp(x);
  int cls = predict(q.params, x);
  if (cls == q.root_label) return;
  double delta = linf(x, q.x0);
  if (delta >= inc.delta) return;

  std::vector<double> probe(x.size());
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < x.size(); ++i) probe[i] = q.x0[i] + mid * (x[i] - q.x0[i]);
    q.domain.clamp(probe);
    if (predict(q.params, probe) != q.root_label) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  if (hi < 1.0) {
    for (std::size_t i = 0; i < x.size(); ++i) probe[i] = q.x0[i] + hi * (x[i] - q.x0[i]);
    q.domain.clamp(probe);
    const int c = predict(q.params, probe);
    if (c != q.root_label) {
      x = probe;
      cls = c;
      delta = linf(x, q.x0);
    }
  }
  inc.has = true;
  inc.delta = delta;
  inc.x = std::move(x);
  inc.cls = cls;
}

struct Node {
  double lower_bound;
  std::uint64_t seq;
  std::vector<std::int8_t> forced;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.lower_bound != b.lower_bound) return a.lower_bound > b.lower_bound;
    return a.seq > b.seq;
  }
};

double margin_upper_bound(const ModelParams& params, const Propagation& prop, int t, int y) {
  const auto& out = params.layers.back();
  const std::size_t k = params.layers.size() - 1;
  std::vector<double> lo, hi;
  if (k == 0) return lp::kInf;  // no hidden layer: the LP decides
  // post-activation box of the last hidden layer
  lo.resize(out.in());
  hi.resize(out.in());
  for (std::size_t j = 0; j < out.in(); ++j) {
    lo[j] = std::max(prop.lo[k - 1][j], 0.0);
    hi[j] = std::max(prop.hi[k - 1][j], 0.0);
  }
  const auto wt = out.weight.row(static_cast<std::size_t>(t));
  const auto wy = out.weight.row(static_cast<std::size_t>(y));
  double s = out.bias[t] - out.bias[y];
  for (std::size_t j = 0; j < out.in(); ++j) {
    const double c = wt[j] - wy[j];
    s += c >= 0.0 ? c * hi[j] : c * lo[j];
  }
  return s + pad(s);
}

// First-order estimate of the L-inf distance to the t-vs-y boundary.
double linear_distance_estimate(const ModelParams& params, const ForwardTrace& trace, int t, int y) {
  const auto& logits = trace.pre.back();
  const double deficit = logits[y] - logits[t];
  std::vector<double> g(params.class_count(), 0.0);
  g[t] = 1.0;
  g[y] = -1.0;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    std::vector<double> prev(params.layers[k].in(), 0.0);
    detail::transpose_matvec_add(params.layers[k], g, prev);
    if (k > 0) {
      const auto& z = trace.pre[k - 1];
      for (std::size_t i = 0; i < prev.size(); ++i) {
        if (!(z[i] > 0.0)) prev[i] = 0.0;
      }
    }
    g.swap(prev);
  }
  double norm1 = 0.0;
  for (double v : g) norm1 += std::abs(v);
  return norm1 > 0.0 ? deficit / norm1 : lp::kInf;
}

}  // namespace

ActivationBounds interval_bounds(const ModelParams& params, std::span<const double> x0, double epsilon,
                                 const InputBox& domain) {
  params.validate();
  if (x0.size() != params.input_dim() || domain.dim() != params.input_dim()) {
    throw ContractViolation("interval_bounds dimension mismatch");
  }
  if (!(epsilon >= 0.0)) throw ContractViolation("epsilon must be non-negative");
  std::vector<double> lo, hi;
  ball_box(x0, epsilon, domain, lo, hi);
  const Propagation prop = propagate(params, lo, hi, {});
  ActivationBounds b;
  for (std::size_t k = 0; k + 1 < prop.lo.size(); ++k) {
    b.lower.push_back(prop.lo[k]);
    b.upper.push_back(prop.hi[k]);
  }
  b.logit_lower = prop.lo.back();
  b.logit_upper = prop.hi.back();
  return b;
}

VerifyOutcome min_adversary(const ModelParams& params, const Sample& root, std::uint64_t root_id,
                            double epsilon, const InputBox& domain, const VerifierOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  params.validate();
  if (root.x.size() != params.input_dim() || domain.dim() != params.input_dim()) {
    throw ContractViolation("min_adversary dimension mismatch");
  }
  if (root.y < 0 || static_cast<std::size_t>(root.y) >= params.class_count()) {
    throw ContractViolation("root label out of range");
  }
  if (!domain.contains(root.x, 1e-12)) throw ContractViolation("root outside the input domain");
  if (!(epsilon >= 0.0)) throw ContractViolation("epsilon must be non-negative");

  VerifyOutcome outcome;
  outcome.epsilon = epsilon;
  auto finish = [&](VerifyOutcome& o) -> VerifyOutcome {
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return o;
  };

  const ForwardTrace trace = forward_trace(params, root.x);
  if (argmax(trace.pre.back()) != root.y) {
    outcome.status = VerifyStatus::kRootMisclassified;
    return finish(outcome);
  }
  if (epsilon == 0.0 || params.class_count() < 2) {
    outcome.status = VerifyStatus::kRobustWithin;
    return finish(outcome);
  }

  QueryContext q{params, root.x, root.y, domain, options, {}, {}};
  q.dom_lo.resize(root.x.size());
  q.dom_hi.resize(root.x.size());
  for (std::size_t i = 0; i < root.x.size(); ++i) {
    q.dom_lo[i] = std::min(0.0, domain.lower[i] - root.x[i]);
    q.dom_hi[i] = std::max(0.0, domain.upper[i] - root.x[i]);
  }

  RadiusSearch mode = options.search;
  if (mode == RadiusSearch::kAuto) {
    mode = params.input_dim() <= options.direct_max_inputs ? RadiusSearch::kDirect : RadiusSearch::kParametric;
  }

  std::vector<int> targets;
  std::vector<double> estimate(params.class_count(), lp::kInf);
  for (int t = 0; t < static_cast<int>(params.class_count()); ++t) {
    if (t == root.y) continue;
    targets.push_back(t);
    estimate[t] = linear_distance_estimate(params, trace, t, root.y);
  }
  std::stable_sort(targets.begin(), targets.end(), [&](int a, int b) { return estimate[a] < estimate[b]; });

  const std::size_t hidden = params.hidden_neuron_count();
  Incumbent inc;
  bool timed_out = false;
  std::vector<double> box_lo, box_hi;

  for (int t : targets) {
    std::size_t nodes = 0;
    std::uint64_t seq = 0;
    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    open.push(Node{0.0, seq++, std::vector<std::int8_t>(hidden, 0)});

    while (!open.empty()) {
      Node node = open.top();
      open.pop();
      if (node.lower_bound >= inc.delta - options.optimality_gap) break;
      if (nodes >= options.node_budget) {
        timed_out = true;
        break;
      }
      ++nodes;
      ++outcome.nodes;

      const double radius = std::min(epsilon, inc.delta);
      ball_box(root.x, radius, domain, box_lo, box_hi);
      const Propagation prop = propagate(params, box_lo, box_hi, node.forced);
      if (!prop.feasible) continue;
      if (margin_upper_bound(params, prop, t, root.y) < options.flip_margin) continue;

      NodeSolve solved;
      const bool parametric = mode != RadiusSearch::kDirect;
      NodeModel model = build_node(q, prop, node.forced, t, radius, parametric);
      if (mode == RadiusSearch::kDirect) {
        solved = solve_direct(model, options);
      } else if (mode == RadiusSearch::kParametric) {
        solved = solve_parametric(model, q, node.lower_bound, radius);
      } else {
        solved = solve_bisection(model, q, node.lower_bound, radius);
      }
      if (solved.kind == NodeSolve::Kind::kFailed) {
        // retry with the other formulation before giving up on this node
        NodeModel alt = build_node(q, prop, node.forced, t, radius, !parametric);
        solved = parametric ? solve_direct(alt, options) : solve_parametric(alt, q, node.lower_bound, radius);
        if (solved.kind == NodeSolve::Kind::kBounded) model = std::move(alt);
      }
      if (solved.kind == NodeSolve::Kind::kInfeasible) continue;

      double lower = node.lower_bound;
      if (solved.kind == NodeSolve::Kind::kBounded) {
        lower = std::max(lower, solved.lower_bound);
        std::vector<double> candidate(root.x.begin(), root.x.end());
        for (std::size_t i = 0; i < candidate.size(); ++i) candidate[i] += solved.x[i];
        offer_candidate(q, std::move(candidate), inc);
        if (lower >= inc.delta - options.optimality_gap) continue;
      }

      // Branch on the neuron whose relaxed value is farthest from both phases.
      std::size_t branch = hidden;
      double worst = solved.kind == NodeSolve::Kind::kBounded ? 1e-9 : -1.0;
      for (const auto& u : model.unstable) {
        double err = 1.0;
        if (solved.kind == NodeSolve::Kind::kBounded) {
          const double z = u.pre.eval(solved.x);
          err = solved.x[u.column] - std::max(z, 0.0);
        }
        if (err > worst) {
          worst = err;
          branch = u.neuron;
        }
      }
      if (branch == hidden) continue;  // relaxation is exact here
      for (std::int8_t phase : {std::int8_t{1}, std::int8_t{-1}}) {
        Node child{lower, seq++, node.forced};
        child.forced[branch] = phase;
        open.push(std::move(child));
      }
    }
  }

  if (inc.has) {
    AdversaryResult adv;
    adv.x_prime = std::move(inc.x);
    adv.delta = inc.delta;
    adv.target_class = inc.cls;
    adv.root_id = root_id;
    outcome.adversary = std::move(adv);
  }
  if (timed_out) {
    outcome.status = VerifyStatus::kTimeout;
  } else {
    outcome.status = inc.has ? VerifyStatus::kFound : VerifyStatus::kRobustWithin;
  }
  return finish(outcome);
}

QueryLog::QueryLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw std::runtime_error("cannot open verifier log " + path.string());
}

void QueryLog::record(std::uint64_t root_id, const VerifyOutcome& outcome) {
  nlohmann::json line = {{"root_id", root_id},
                         {"outcome", std::string(to_string(outcome.status))},
                         {"delta", outcome.adversary ? nlohmann::json(outcome.adversary->delta) : nlohmann::json()},
                         {"nodes", outcome.nodes},
                         {"seconds", outcome.seconds}};
  std::lock_guard<std::mutex> lock(mu_);
  out_ << line.dump() << '\n';
  out_.flush();
}

std::vector<VerifyOutcome> min_adversary_batch(const ModelParams& params, std::span<const Sample> roots,
                                               std::span<const std::uint64_t> root_ids, double epsilon,
                                               const InputBox& domain, const VerifierOptions& options,
                                               std::size_t workers, QueryLog* log) {
  if (root_ids.size() != roots.size()) throw ContractViolation("root id count mismatch");
  std::vector<VerifyOutcome> results(roots.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= roots.size()) return;
      try {
        results[i] = min_adversary(params, roots[i], root_ids[i], epsilon, domain, options);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        next = roots.size();
        return;
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, roots.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  if (log != nullptr) {
    for (std::size_t i = 0; i < results.size(); ++i) log->record(root_ids[i], results[i]);
  }
  return results;
}

PerturbationReport average_perturbation_bound(const ModelParams& params, std::span<const Sample> testset,
                                              double epsilon, const InputBox& domain,
                                              const VerifierOptions& options, std::size_t workers,
                                              QueryLog* log) {
  if (testset.empty()) throw ContractViolation("p_b of an empty test set");
  std::vector<std::uint64_t> ids(testset.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  const auto outcomes = min_adversary_batch(params, testset, ids, epsilon, domain, options, workers, log);

  PerturbationReport rep;
  rep.evaluated = testset.size();
  double total = 0.0;
  for (const auto& o : outcomes) {
    double delta = 0.0;
    switch (o.status) {
      case VerifyStatus::kRootMisclassified: ++rep.misclassified; break;
      case VerifyStatus::kFound:
        ++rep.found;
        delta = o.adversary->delta;
        break;
      case VerifyStatus::kRobustWithin:
        ++rep.robust;
        delta = epsilon;
        break;
      case VerifyStatus::kTimeout:
        ++rep.timeouts;
        delta = o.adversary ? o.adversary->delta : epsilon;
        break;
    }
    rep.deltas.push_back(delta);
    total += delta;
  }
  rep.p_b = total / static_cast<double>(testset.size());
  return rep;
}

}  // namespace iada
