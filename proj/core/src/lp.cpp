#include "iada/lp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace iada::lp {

std::size_t LinearProgram::add_variable(double cost, double lo, double hi) {
  const std::size_t old_n = objective.size();
  objective.push_back(cost);
  lower.push_back(lo);
  upper.push_back(hi);
  if (rows.rows > 0) {
    Matrix wider(rows.rows, old_n + 1);
    for (std::size_t r = 0; r < rows.rows; ++r) {
      std::copy(rows.row(r).begin(), rows.row(r).end(), wider.row(r).begin());
    }
    rows = std::move(wider);
  } else {
    rows.cols = old_n + 1;
  }
  return old_n;
}

void LinearProgram::add_row(std::span<const double> coeffs, RowSense sense, double value) {
  const std::size_t n = variable_count();
  if (coeffs.size() > n) throw ContractViolation("row wider than the variable count");
  rows.cols = n;
  rows.data.resize(rows.data.size() + n, 0.0);
  std::copy(coeffs.begin(), coeffs.end(), rows.data.end() - static_cast<std::ptrdiff_t>(n));
  ++rows.rows;
  senses.push_back(sense);
  rhs.push_back(value);
}

void LinearProgram::validate() const {
  const std::size_t n = variable_count();
  if (lower.size() != n || upper.size() != n) throw ContractViolation("bound vectors mismatch");
  if (rows.rows != senses.size() || rhs.size() != senses.size()) {
    throw ContractViolation("row metadata mismatch");
  }
  if (rows.rows > 0 && (rows.cols != n || rows.data.size() != rows.rows * n)) {
    throw ContractViolation("row width differs from variable count");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(objective[j])) throw ContractViolation("non-finite objective coefficient");
    if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] == kInf || upper[j] == -kInf ||
        lower[j] > upper[j]) {
      throw ContractViolation("invalid bounds on variable " + std::to_string(j));
    }
  }
  for (double v : rows.data) {
    if (!std::isfinite(v)) throw ContractViolation("non-finite constraint coefficient");
  }
  for (double v : rhs) {
    if (!std::isfinite(v)) throw ContractViolation("non-finite right-hand side");
  }
}

std::string_view to_string(LpStatus status) {
  switch (status) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
    case LpStatus::kNumericalFailure: return "numerical_failure";
    case LpStatus::kIterationLimit: return "iteration_limit";
  }
  return "unknown";
}

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

// Columns 0..n-1 are the structurals, n..n+m-1 the row logicals w_i with
// A x - w = 0 and the row sense encoded in the bounds of w_i. The tableau
// holds B^-1 [A | -I]; basic values follow from x_B = -B^-1 N x_N.
class Simplex {
 public:
  Simplex(const LinearProgram& lp, const SolverOptions& opt)
      : lp_(lp), opt_(opt), n_(lp.variable_count()), m_(lp.row_count()), cols_(n_ + m_) {
    lb_.resize(cols_);
    ub_.resize(cols_);
    cost_.assign(cols_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      lb_[j] = lp.lower[j];
      ub_[j] = lp.upper[j];
      cost_[j] = lp.objective[j];
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const double b = lp.rhs[i];
      switch (lp.senses[i]) {
        case RowSense::kLessEqual: lb_[n_ + i] = -kInf; ub_[n_ + i] = b; break;
        case RowSense::kGreaterEqual: lb_[n_ + i] = b; ub_[n_ + i] = kInf; break;
        case RowSense::kEqual: lb_[n_ + i] = b; ub_[n_ + i] = b; break;
      }
    }
    tab_.assign(m_ * cols_, 0.0);
    head_.assign(m_, kNone);
    x_.assign(cols_, 0.0);
    d_.assign(cols_, 0.0);
    basic_cost_.assign(m_, 0.0);
  }

  LpSolution run(const Basis* warm) {
    initial_basis(warm);
    refactor();
    bool bland = false;
    bool fresh = true;
    bool costs_dirty = true;
    std::size_t degenerate = 0;
    std::vector<double> prev_cost;

    while (true) {
      if (iterations_ >= opt_.max_iterations) return finish(LpStatus::kIterationLimit);

      const bool phase1 = load_basic_costs();
      if (phase1 != last_phase1_ || basic_cost_ != prev_cost) costs_dirty = true;
      last_phase1_ = phase1;
      if (costs_dirty) {
        price(phase1);
        prev_cost = basic_cost_;
        costs_dirty = false;
      }

      int dir = 0;
      const std::size_t enter = choose_entering(bland, dir);
      if (enter == kNone) {
        if (!fresh) {
          refactor();
          fresh = true;
          costs_dirty = true;
          continue;
        }
        return finish(phase1 ? LpStatus::kInfeasible : LpStatus::kOptimal);
      }

      std::size_t leave_row = kNone;
      double leave_bound = 0.0;
      double theta = 0.0;
      const bool flip = ratio_test(enter, dir, leave_row, leave_bound, theta);
      if (!flip && leave_row == kNone) {
        if (!fresh) {
          refactor();
          fresh = true;
          costs_dirty = true;
          continue;
        }
        return finish(phase1 ? LpStatus::kNumericalFailure : LpStatus::kUnbounded);
      }

      ++iterations_;
      fresh = false;
      apply_step(enter, dir, theta);
      if (flip) {
        status_[enter] = dir > 0 ? VarStatus::kAtUpper : VarStatus::kAtLower;
        x_[enter] = dir > 0 ? ub_[enter] : lb_[enter];
      } else {
        const std::size_t leaving = head_[leave_row];
        x_[leaving] = leave_bound;
        status_[leaving] = (leave_bound == lb_[leaving]) ? VarStatus::kAtLower : VarStatus::kAtUpper;
        status_[enter] = VarStatus::kBasic;
        head_[leave_row] = enter;
        pivot(leave_row, enter);
        costs_dirty = true;
        if (++since_refactor_ >= opt_.refactor_interval) {
          refactor();
          fresh = true;
        }
      }

      if (theta <= 1e-12) {
        if (++degenerate > opt_.bland_after) bland = true;
      } else {
        degenerate = 0;
        bland = false;
      }
    }
  }

 private:
  double& tab(std::size_t r, std::size_t c) { return tab_[r * cols_ + c]; }

  void set_nonbasic_at_bound(std::size_t j, VarStatus preferred) {
    if (preferred == VarStatus::kAtUpper && ub_[j] < kInf) {
      status_[j] = VarStatus::kAtUpper;
      x_[j] = ub_[j];
    } else if (lb_[j] > -kInf) {
      status_[j] = VarStatus::kAtLower;
      x_[j] = lb_[j];
    } else if (ub_[j] < kInf) {
      status_[j] = VarStatus::kAtUpper;
      x_[j] = ub_[j];
    } else {
      status_[j] = VarStatus::kFree;
      x_[j] = 0.0;
    }
  }

  void initial_basis(const Basis* warm) {
    status_.assign(cols_, VarStatus::kAtLower);
    bool use_warm = warm != nullptr && warm->status.size() == cols_ &&
                    static_cast<std::size_t>(std::count(warm->status.begin(), warm->status.end(),
                                                        VarStatus::kBasic)) == m_;
    for (std::size_t j = 0; j < cols_; ++j) {
      const VarStatus s = use_warm ? warm->status[j] : (j < n_ ? VarStatus::kAtLower : VarStatus::kBasic);
      if (s == VarStatus::kBasic) {
        status_[j] = VarStatus::kBasic;
        x_[j] = 0.0;
      } else {
        set_nonbasic_at_bound(j, s);
      }
    }
  }

  // Gauss-Jordan on [A | -I] with pivots taken in the basic columns. Columns
  // that turn out dependent are dropped to a bound and replaced by logicals.
  void refactor() {
    std::fill(tab_.begin(), tab_.end(), 0.0);
    for (std::size_t r = 0; r < m_; ++r) {
      const auto src = lp_.rows.row(r);
      std::copy(src.begin(), src.end(), tab_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
      tab(r, n_ + r) = -1.0;
    }
    std::vector<std::size_t> basics;
    basics.reserve(m_);
    // logicals last so structurals get first pick of pivot rows
    for (std::size_t j = 0; j < cols_; ++j) {
      if (status_[j] == VarStatus::kBasic) basics.push_back(j);
    }
    std::vector<bool> used(m_, false);
    std::fill(head_.begin(), head_.end(), kNone);
    for (std::size_t c : basics) {
      std::size_t best = kNone;
      double best_abs = 1e-11;
      for (std::size_t r = 0; r < m_; ++r) {
        if (used[r]) continue;
        const double a = std::abs(tab(r, c));
        if (a > best_abs) {
          best_abs = a;
          best = r;
        }
      }
      if (best == kNone) {
        set_nonbasic_at_bound(c, VarStatus::kAtLower);
        continue;
      }
      used[best] = true;
      head_[best] = c;
      pivot(best, c);
    }
    for (std::size_t r = 0; r < m_; ++r) {
      if (used[r]) continue;
      std::size_t best = kNone;
      double best_abs = 0.0;
      for (std::size_t c = n_; c < cols_; ++c) {
        if (status_[c] == VarStatus::kBasic) continue;
        const double a = std::abs(tab(r, c));
        if (a > best_abs) {
          best_abs = a;
          best = c;
        }
      }
      // [A | -I] has full row rank, so some logical always qualifies.
      used[r] = true;
      head_[r] = best;
      status_[best] = VarStatus::kBasic;
      pivot(r, best);
    }
    since_refactor_ = 0;
    compute_basic_values();
  }

  void compute_basic_values() {
    for (std::size_t r = 0; r < m_; ++r) {
      double s = 0.0;
      const double* row = tab_.data() + r * cols_;
      for (std::size_t j = 0; j < cols_; ++j) {
        if (status_[j] != VarStatus::kBasic && x_[j] != 0.0) s += row[j] * x_[j];
      }
      x_[head_[r]] = -s;
    }
  }

  void pivot(std::size_t p, std::size_t c) {
    double* prow = tab_.data() + p * cols_;
    const double inv = 1.0 / prow[c];
    for (std::size_t j = 0; j < cols_; ++j) prow[j] *= inv;
    prow[c] = 1.0;
    for (std::size_t r = 0; r < m_; ++r) {
      if (r == p) continue;
      double* row = tab_.data() + r * cols_;
      const double f = row[c];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < cols_; ++j) row[j] -= f * prow[j];
      row[c] = 0.0;
    }
  }

  // Phase 1 prices the sum of bound violations; returns whether any basic
  // variable is infeasible.
  bool load_basic_costs() {
    bool infeasible = false;
    for (std::size_t r = 0; r < m_; ++r) {
      const std::size_t v = head_[r];
      if (x_[v] < lb_[v] - opt_.primal_tolerance) {
        basic_cost_[r] = -1.0;
        infeasible = true;
      } else if (x_[v] > ub_[v] + opt_.primal_tolerance) {
        basic_cost_[r] = 1.0;
        infeasible = true;
      } else {
        basic_cost_[r] = 0.0;
      }
    }
    if (!infeasible) {
      for (std::size_t r = 0; r < m_; ++r) basic_cost_[r] = cost_[head_[r]];
    }
    return infeasible;
  }

  void price(bool phase1) {
    for (std::size_t j = 0; j < cols_; ++j) d_[j] = phase1 ? 0.0 : cost_[j];
    for (std::size_t r = 0; r < m_; ++r) {
      const double cb = basic_cost_[r];
      if (cb == 0.0) continue;
      const double* row = tab_.data() + r * cols_;
      for (std::size_t j = 0; j < cols_; ++j) d_[j] -= cb * row[j];
    }
    for (std::size_t r = 0; r < m_; ++r) d_[head_[r]] = 0.0;
  }

  std::size_t choose_entering(bool bland, int& dir) const {
    std::size_t best = kNone;
    double best_score = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) {
      const VarStatus s = status_[j];
      if (s == VarStatus::kBasic || lb_[j] == ub_[j]) continue;
      const double dj = d_[j];
      int cand = 0;
      if ((s == VarStatus::kAtLower || s == VarStatus::kFree) && dj < -opt_.dual_tolerance) cand = 1;
      if ((s == VarStatus::kAtUpper || s == VarStatus::kFree) && dj > opt_.dual_tolerance) cand = -1;
      if (cand == 0) continue;
      if (bland) {
        dir = cand;
        return j;
      }
      if (std::abs(dj) > best_score) {
        best_score = std::abs(dj);
        best = j;
        dir = cand;
      }
    }
    return best;
  }

  // Harris two-pass ratio test. Returns true for a bound flip of the entering
  // variable; otherwise leave_row names the pivot row (kNone: unbounded ray).
  bool ratio_test(std::size_t enter, int dir, std::size_t& leave_row, double& leave_bound,
                  double& theta) {
    const double tol = opt_.primal_tolerance;
    double relaxed_min = kInf;
    for (std::size_t r = 0; r < m_; ++r) {
      const double alpha = -dir * tab(r, enter);
      if (std::abs(alpha) < opt_.pivot_tolerance) continue;
      const std::size_t v = head_[r];
      const double xv = x_[v];
      double relaxed = kInf;
      if (xv < lb_[v] - tol) {
        if (alpha > 0) relaxed = (lb_[v] - xv) / alpha;
      } else if (xv > ub_[v] + tol) {
        if (alpha < 0) relaxed = (ub_[v] - xv) / alpha;
      } else if (alpha > 0) {
        if (ub_[v] < kInf) relaxed = (ub_[v] + tol - xv) / alpha;
      } else {
        if (lb_[v] > -kInf) relaxed = (lb_[v] - tol - xv) / alpha;
      }
      relaxed_min = std::min(relaxed_min, relaxed);
    }

    const double range = ub_[enter] - lb_[enter];  // inf for free or half-bounded
    if (range <= relaxed_min && range < kInf) {
      theta = range;
      return true;
    }
    if (relaxed_min == kInf) {
      leave_row = kNone;
      return false;
    }

    double best_alpha = 0.0;
    for (std::size_t r = 0; r < m_; ++r) {
      const double alpha = -dir * tab(r, enter);
      if (std::abs(alpha) < opt_.pivot_tolerance) continue;
      const std::size_t v = head_[r];
      const double xv = x_[v];
      double exact = kInf, bound = 0.0;
      if (xv < lb_[v] - tol) {
        if (alpha > 0) { exact = (lb_[v] - xv) / alpha; bound = lb_[v]; }
      } else if (xv > ub_[v] + tol) {
        if (alpha < 0) { exact = (ub_[v] - xv) / alpha; bound = ub_[v]; }
      } else if (alpha > 0) {
        if (ub_[v] < kInf) { exact = (ub_[v] - xv) / alpha; bound = ub_[v]; }
      } else {
        if (lb_[v] > -kInf) { exact = (lb_[v] - xv) / alpha; bound = lb_[v]; }
      }
      if (exact <= relaxed_min && std::abs(alpha) > best_alpha) {
        best_alpha = std::abs(alpha);
        leave_row = r;
        leave_bound = bound;
        theta = std::max(exact, 0.0);
      }
    }
    return false;
  }

  void apply_step(std::size_t enter, int dir, double theta) {
    if (theta == 0.0) return;
    x_[enter] += dir * theta;
    for (std::size_t r = 0; r < m_; ++r) {
      const double alpha = -dir * tab(r, enter);
      if (alpha != 0.0) x_[head_[r]] += alpha * theta;
    }
  }

  LpSolution finish(LpStatus status) {
    LpSolution sol;
    sol.status = status;
    sol.iterations = iterations_;
    sol.basis.status = status_;
    sol.x.assign(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_));
    if (status != LpStatus::kOptimal) return sol;

    // Accept only if the original rows and bounds hold.
    const double tol = opt_.feasibility_check;
    for (std::size_t j = 0; j < n_; ++j) {
      if (sol.x[j] < lb_[j] - tol || sol.x[j] > ub_[j] + tol) {
        sol.status = LpStatus::kNumericalFailure;
        return sol;
      }
      sol.x[j] = std::clamp(sol.x[j], lb_[j], ub_[j]);
    }
    for (std::size_t i = 0; i < m_; ++i) {
      double act = 0.0;
      const auto row = lp_.rows.row(i);
      for (std::size_t j = 0; j < n_; ++j) act += row[j] * sol.x[j];
      const double slack_tol = tol * std::max(1.0, std::abs(lp_.rhs[i]));
      if (act < lb_[n_ + i] - slack_tol || act > ub_[n_ + i] + slack_tol) {
        sol.status = LpStatus::kNumericalFailure;
        return sol;
      }
    }
    sol.objective = 0.0;
    for (std::size_t j = 0; j < n_; ++j) sol.objective += cost_[j] * sol.x[j];
    sol.reduced_costs.assign(d_.begin(), d_.begin() + static_cast<std::ptrdiff_t>(n_));
    sol.duals.assign(d_.begin() + static_cast<std::ptrdiff_t>(n_), d_.end());
    return sol;
  }

  const LinearProgram& lp_;
  SolverOptions opt_;
  std::size_t n_, m_, cols_;
  std::vector<double> lb_, ub_, cost_;
  std::vector<double> tab_;
  std::vector<std::size_t> head_;
  std::vector<VarStatus> status_;
  std::vector<double> x_, d_, basic_cost_;
  std::size_t iterations_ = 0;
  std::size_t since_refactor_ = 0;
  bool last_phase1_ = false;
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const SolverOptions& options, const Basis* warm_start) {
  lp.validate();
  Simplex simplex(lp, options);
  return simplex.run(warm_start);
}

}  // namespace iada::lp
