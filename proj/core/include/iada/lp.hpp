#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "iada/nn.hpp"

namespace iada::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RowSense : std::uint8_t { kLessEqual, kEqual, kGreaterEqual };

// minimize c^T x  subject to  row_i(x) {<=,=,>=} rhs_i,  lower <= x <= upper.
// Bounds may be infinite; everything else must be finite.
struct LinearProgram {
  std::vector<double> objective;
  std::vector<double> lower;
  std::vector<double> upper;
  Matrix rows;  // row_count x variable_count, dense
  std::vector<RowSense> senses;
  std::vector<double> rhs;

  std::size_t variable_count() const { return objective.size(); }
  std::size_t row_count() const { return senses.size(); }

  // Appends a variable and widens every existing row with a zero.
  std::size_t add_variable(double cost, double lo, double hi);
  // Coefficients beyond coeffs.size() are zero.
  void add_row(std::span<const double> coeffs, RowSense sense, double rhs);

  void validate() const;
};

enum class LpStatus : std::uint8_t {
  kOptimal,
  kInfeasible,
  kUnbounded,
  kNumericalFailure,
  kIterationLimit,
};

std::string_view to_string(LpStatus status);

enum class VarStatus : std::uint8_t { kBasic, kAtLower, kAtUpper, kFree };

// Column statuses for the structurals followed by one logical per row.
struct Basis {
  std::vector<VarStatus> status;
  bool empty() const { return status.empty(); }
};

struct LpSolution {
  LpStatus status = LpStatus::kNumericalFailure;
  std::vector<double> x;
  double objective = 0.0;
  // d_j = c_j - y^T A_j at the final basis (structural columns only).
  std::vector<double> reduced_costs;
  // Row prices y.
  std::vector<double> duals;
  Basis basis;
  std::size_t iterations = 0;

  bool optimal() const { return status == LpStatus::kOptimal; }
};

struct SolverOptions {
  double primal_tolerance = 1e-9;
  double dual_tolerance = 1e-9;
  double pivot_tolerance = 1e-9;
  // Final acceptance check against the original rows and bounds.
  double feasibility_check = 1e-7;
  std::size_t max_iterations = 50000;
  std::size_t refactor_interval = 64;
  // Consecutive degenerate pivots before switching to Bland's rule.
  std::size_t bland_after = 50;
};

// Bounded-variable primal simplex. A warm basis with the right shape is used
// as the starting point; otherwise the all-logical basis.
LpSolution solve_lp(const LinearProgram& lp, const SolverOptions& options = {},
                    const Basis* warm_start = nullptr);

}  // namespace iada::lp
