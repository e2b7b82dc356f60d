#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "iada/input_box.hpp"
#include "iada/lp.hpp"
#include "iada/nn.hpp"

namespace iada {

enum class NeuronPhase : std::int8_t { kInactive = -1, kUnstable = 0, kActive = 1 };

// Sound pre-activation intervals over {x in domain : |x - x0|_inf <= eps}.
struct ActivationBounds {
  // One entry per hidden layer.
  std::vector<std::vector<double>> lower;
  std::vector<std::vector<double>> upper;
  // Logit intervals from the same propagation.
  std::vector<double> logit_lower;
  std::vector<double> logit_upper;

  NeuronPhase phase(std::size_t layer, std::size_t neuron) const;
  std::size_t unstable_count() const;
};

ActivationBounds interval_bounds(const ModelParams& params, std::span<const double> x0, double epsilon,
                                 const InputBox& domain);

struct AdversaryResult {
  std::vector<double> x_prime;
  double delta = 0.0;  // |x0 - x_prime|_inf
  int target_class = -1;
  std::uint64_t root_id = 0;
};

enum class VerifyStatus : std::uint8_t { kRobustWithin, kFound, kRootMisclassified, kTimeout };

std::string_view to_string(VerifyStatus status);

struct VerifyOutcome {
  VerifyStatus status = VerifyStatus::kRobustWithin;
  double epsilon = 0.0;
  // Set for kFound; for kTimeout holds the best adversary seen, if any.
  std::optional<AdversaryResult> adversary;
  std::size_t nodes = 0;  // LP relaxations solved
  double seconds = 0.0;

  bool found() const { return status == VerifyStatus::kFound; }
};

// How each branch-and-bound node computes its minimal radius.
enum class RadiusSearch : std::uint8_t {
  kAuto,        // direct for small inputs, parametric otherwise
  kDirect,      // one LP with r in the objective and |x - x0| <= r rows
  kParametric,  // Newton on the max-margin value function of r; small LPs
  kBisection,   // debugging: bisection on LP feasibility
};

struct VerifierOptions {
  // LP relaxations per (root, target class) before giving up.
  std::size_t node_budget = 50000;
  // Required logit_t - logit_y at an adversary; makes the argmax flip strict.
  double flip_margin = 1e-6;
  // Nodes whose bound is within this of the incumbent are pruned.
  double optimality_gap = 1e-5;
  RadiusSearch search = RadiusSearch::kAuto;
  std::size_t direct_max_inputs = 32;
  double bisection_tolerance = 1e-7;
  lp::SolverOptions lp;
};

// Appends one JSON line per query: root id, outcome, delta, nodes, seconds.
class QueryLog {
 public:
  explicit QueryLog(const std::filesystem::path& path);
  void record(std::uint64_t root_id, const VerifyOutcome& outcome);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

// Smallest L-inf perturbation of root.x inside `domain` that changes the
// predicted class, searched up to radius epsilon.
VerifyOutcome min_adversary(const ModelParams& params, const Sample& root, std::uint64_t root_id,
                            double epsilon, const InputBox& domain, const VerifierOptions& options = {});

// Verifies every root against one parameter snapshot on `workers` threads.
// Results come back in root order regardless of the pool width.
std::vector<VerifyOutcome> min_adversary_batch(const ModelParams& params, std::span<const Sample> roots,
                                               std::span<const std::uint64_t> root_ids, double epsilon,
                                               const InputBox& domain, const VerifierOptions& options,
                                               std::size_t workers, QueryLog* log = nullptr);

struct PerturbationReport {
  double p_b = 0.0;
  std::size_t evaluated = 0;
  std::size_t misclassified = 0;
  std::size_t found = 0;
  std::size_t robust = 0;
  std::size_t timeouts = 0;
  std::vector<double> deltas;  // per test point, 0 when misclassified
};

// Mean over the test set of: 0 if misclassified, the minimal adversarial
// distance if one exists within epsilon, epsilon if none does. A timed-out
// point contributes its best upper bound, else epsilon.
PerturbationReport average_perturbation_bound(const ModelParams& params, std::span<const Sample> testset,
                                              double epsilon, const InputBox& domain,
                                              const VerifierOptions& options = {}, std::size_t workers = 1,
                                              QueryLog* log = nullptr);

}  // namespace iada
