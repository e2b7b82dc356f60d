#include <gtest/gtest.h>

#include <cmath>

#include "iada/lp.hpp"
#include "iada/random.hpp"
#include "oracles/textbook_simplex.hpp"

using namespace iada;
using namespace iada::lp;

namespace {

double row_value(const LinearProgram& lp, std::size_t i, const std::vector<double>& x) {
  double s = 0.0;
  for (std::size_t j = 0; j < lp.variable_count(); ++j) s += lp.rows(i, j) * x[j];
  return s;
}

void expect_feasible(const LinearProgram& lp, const std::vector<double>& x, double tol) {
  for (std::size_t j = 0; j < lp.variable_count(); ++j) {
    EXPECT_GE(x[j], lp.lower[j] - tol);
    EXPECT_LE(x[j], lp.upper[j] + tol);
  }
  for (std::size_t i = 0; i < lp.row_count(); ++i) {
    const double v = row_value(lp, i, x);
    const double t = tol * std::max(1.0, std::abs(lp.rhs[i]));
    if (lp.senses[i] != RowSense::kGreaterEqual) EXPECT_LE(v, lp.rhs[i] + t) << "row " << i;
    if (lp.senses[i] != RowSense::kLessEqual) EXPECT_GE(v, lp.rhs[i] - t) << "row " << i;
  }
}

// Random LP that is feasible by construction: rows are slack around a
// hidden point inside the bounds.
LinearProgram random_feasible_lp(Rng& rng, std::vector<double>* witness = nullptr) {
  const std::size_t n = 2 + rng.below(19);
  const std::size_t m = 1 + rng.below(2 * n);
  LinearProgram lp;
  std::vector<double> point(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double lo = rng.uniform(-5.0, 0.0);
    const double hi = lo + rng.uniform(0.5, 6.0);
    lp.add_variable(rng.uniform(-3.0, 3.0), lo, hi);
    point[j] = rng.uniform(lo, hi);
  }
  std::vector<double> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    double v = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = rng.uniform() < 0.3 ? 0.0 : rng.uniform(-2.0, 2.0);
      v += row[j] * point[j];
    }
    const double kind = rng.uniform();
    if (kind < 0.45) {
      lp.add_row(row, RowSense::kLessEqual, v + rng.uniform(0.0, 1.0));
    } else if (kind < 0.9) {
      lp.add_row(row, RowSense::kGreaterEqual, v - rng.uniform(0.0, 1.0));
    } else {
      lp.add_row(row, RowSense::kEqual, v);
    }
  }
  if (witness != nullptr) *witness = point;
  return lp;
}

}  // namespace

TEST(SolveLp, LowerBoundIsOptimal) {
  LinearProgram lp;
  lp.add_variable(1.0, -kInf, kInf);
  const double one[] = {1.0};
  lp.add_row(one, RowSense::kGreaterEqual, 3.0);
  lp.add_row(one, RowSense::kLessEqual, 10.0);
  const auto sol = solve_lp(lp);
  ASSERT_EQ(sol.status, LpStatus::kOptimal);
  EXPECT_NEAR(sol.x[0], 3.0, 1e-12);
  EXPECT_NEAR(sol.objective, 3.0, 1e-12);
}

TEST(SolveLp, ContradictoryRowsAreInfeasible) {
  LinearProgram lp;
  lp.add_variable(1.0, -kInf, kInf);
  lp.add_variable(1.0, -kInf, kInf);
  const double sum[] = {1.0, 1.0};
  const double x_only[] = {1.0, 0.0};
  const double y_only[] = {0.0, 1.0};
  lp.add_row(sum, RowSense::kGreaterEqual, 1.0);
  lp.add_row(x_only, RowSense::kLessEqual, 0.0);
  lp.add_row(y_only, RowSense::kLessEqual, 0.0);
  EXPECT_EQ(solve_lp(lp).status, LpStatus::kInfeasible);
}

TEST(SolveLp, UnboundedDirectionDetected) {
  LinearProgram lp;
  lp.add_variable(-1.0, 0.0, kInf);
  lp.add_variable(0.0, 0.0, kInf);
  const double row[] = {1.0, -1.0};
  lp.add_row(row, RowSense::kLessEqual, 1.0);
  EXPECT_EQ(solve_lp(lp).status, LpStatus::kUnbounded);
}

TEST(SolveLp, InconsistentBoundsAreInfeasible) {
  LinearProgram lp;
  lp.add_variable(1.0, 0.0, 1.0);
  const double row[] = {1.0};
  lp.add_row(row, RowSense::kEqual, 2.0);
  EXPECT_EQ(solve_lp(lp).status, LpStatus::kInfeasible);
}

TEST(SolveLp, EqualityAndFreeVariables) {
  // min x - y  s.t. x + y = 4, x - y >= -2, x free, y <= 5
  LinearProgram lp;
  lp.add_variable(1.0, -kInf, kInf);
  lp.add_variable(-1.0, -kInf, 5.0);
  const double a[] = {1.0, 1.0};
  const double b[] = {1.0, -1.0};
  lp.add_row(a, RowSense::kEqual, 4.0);
  lp.add_row(b, RowSense::kGreaterEqual, -2.0);
  const auto sol = solve_lp(lp);
  ASSERT_EQ(sol.status, LpStatus::kOptimal);
  EXPECT_NEAR(sol.objective, -2.0, 1e-9);
  EXPECT_NEAR(sol.x[0], 1.0, 1e-9);
  EXPECT_NEAR(sol.x[1], 3.0, 1e-9);
}

TEST(SolveLp, BealeCyclingExampleTerminates) {
  // Classic instance on which Dantzig's rule cycles without anti-cycling.
  LinearProgram lp;
  lp.add_variable(-0.75, 0.0, kInf);
  lp.add_variable(150.0, 0.0, kInf);
  lp.add_variable(-0.02, 0.0, kInf);
  lp.add_variable(6.0, 0.0, kInf);
  const double r1[] = {0.25, -60.0, -0.04, 9.0};
  const double r2[] = {0.5, -90.0, -0.02, 3.0};
  const double r3[] = {0.0, 0.0, 1.0, 0.0};
  lp.add_row(r1, RowSense::kLessEqual, 0.0);
  lp.add_row(r2, RowSense::kLessEqual, 0.0);
  lp.add_row(r3, RowSense::kLessEqual, 1.0);
  const auto sol = solve_lp(lp);
  ASSERT_EQ(sol.status, LpStatus::kOptimal);
  EXPECT_NEAR(sol.objective, -0.05, 1e-9);
}

TEST(SolveLp, RandomInstancesMatchTextbookOracle) {
  Rng rng(424242);
  int compared = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> witness;
    const LinearProgram lp = random_feasible_lp(rng, &witness);
    const auto sol = solve_lp(lp);
    const auto ref = oracle::textbook_solve(lp);
    ASSERT_EQ(ref.status, oracle::TextbookStatus::kOptimal) << "trial " << trial;
    ASSERT_EQ(sol.status, LpStatus::kOptimal) << "trial " << trial;
    EXPECT_NEAR(sol.objective, ref.objective, 1e-6 * std::max(1.0, std::abs(ref.objective))) << "trial " << trial;
    expect_feasible(lp, sol.x, 1e-7);
    // weak duality spot check against the construction witness
    double wit = 0.0;
    for (std::size_t j = 0; j < witness.size(); ++j) wit += lp.objective[j] * witness[j];
    EXPECT_GE(wit, sol.objective - 1e-6);
    ++compared;
  }
  EXPECT_EQ(compared, 50);
}

TEST(SolveLp, RandomInfeasibleInstancesAgreeWithOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    LinearProgram lp = random_feasible_lp(rng);
    // a row pair that cannot both hold
    std::vector<double> row(lp.variable_count(), 0.0);
    row[0] = 1.0;
    row[lp.variable_count() - 1] = 1.0;
    lp.add_row(row, RowSense::kGreaterEqual, 1.0);
    lp.add_row(row, RowSense::kLessEqual, 0.5);
    EXPECT_EQ(solve_lp(lp).status, LpStatus::kInfeasible);
    EXPECT_EQ(oracle::textbook_solve(lp).status, oracle::TextbookStatus::kInfeasible);
  }
}

TEST(SolveLp, WarmStartReachesSameOptimum) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    LinearProgram lp = random_feasible_lp(rng);
    const auto cold = solve_lp(lp);
    ASSERT_TRUE(cold.optimal());
    // tighten bounds slightly, then resolve from the old basis
    for (std::size_t j = 0; j < lp.variable_count(); ++j) {
      lp.upper[j] -= 0.05 * (lp.upper[j] - lp.lower[j]);
    }
    const auto warm = solve_lp(lp, {}, &cold.basis);
    const auto fresh = solve_lp(lp);
    ASSERT_EQ(warm.status, fresh.status);
    if (fresh.optimal()) EXPECT_NEAR(warm.objective, fresh.objective, 1e-7 * std::max(1.0, std::abs(fresh.objective)));
  }
}

TEST(SolveLp, IdenticalInputIdenticalResult) {
  Rng rng(5);
  const LinearProgram lp = random_feasible_lp(rng);
  const auto a = solve_lp(lp);
  const auto b = solve_lp(lp);
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.x, b.x);
}

TEST(SolveLp, DualsCertifyOptimality) {
  // Strong duality on the random instances: b^T y + bound terms equals c^T x.
  Rng rng(31337);
  for (int trial = 0; trial < 20; ++trial) {
    const LinearProgram lp = random_feasible_lp(rng);
    const auto sol = solve_lp(lp);
    ASSERT_TRUE(sol.optimal());
    ASSERT_EQ(sol.duals.size(), lp.row_count());
    ASSERT_EQ(sol.reduced_costs.size(), lp.variable_count());
    double dual_obj = 0.0;
    for (std::size_t i = 0; i < lp.row_count(); ++i) dual_obj += sol.duals[i] * lp.rhs[i];
    for (std::size_t j = 0; j < lp.variable_count(); ++j) dual_obj += sol.reduced_costs[j] * sol.x[j];
    EXPECT_NEAR(dual_obj, sol.objective, 1e-6 * std::max(1.0, std::abs(sol.objective)));
  }
}

TEST(SolveLp, MalformedProgramRejected) {
  LinearProgram lp;
  lp.add_variable(1.0, 2.0, 1.0);
  EXPECT_THROW(solve_lp(lp), ContractViolation);
  LinearProgram nan_cost;
  nan_cost.add_variable(std::nan(""), 0.0, 1.0);
  EXPECT_THROW(solve_lp(nan_cost), ContractViolation);
}
