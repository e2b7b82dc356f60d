#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "iada/random.hpp"
#include "iada/verifier.hpp"
#include "oracles/pattern_oracle.hpp"

using namespace iada;

namespace {

ModelParams linear_two_class() {
  // logits (x, 1 - x)
  ModelParams p;
  DenseLayer l;
  l.weight = Matrix(2, 1);
  l.weight(0, 0) = 1.0;
  l.weight(1, 0) = -1.0;
  l.bias = {0.0, 1.0};
  p.layers.push_back(l);
  return p;
}

ModelParams random_net(Rng& rng, std::vector<std::size_t> dims, double bias_scale) {
  ModelParams p = init_params(dims, rng);
  for (auto& layer : p.layers) {
    for (double& b : layer.bias) b = rng.uniform(-bias_scale, bias_scale);
  }
  return p;
}

void expect_sound(const ModelParams& p, const Sample& root, const VerifyOutcome& o, const InputBox& box) {
  if (!o.adversary) return;
  const auto& adv = *o.adversary;
  EXPECT_NE(predict(p, adv.x_prime), root.y);
  EXPECT_EQ(predict(p, adv.x_prime), adv.target_class);
  EXPECT_TRUE(box.contains(adv.x_prime));
  double d = 0.0;
  for (std::size_t i = 0; i < root.x.size(); ++i) d = std::max(d, std::abs(adv.x_prime[i] - root.x[i]));
  EXPECT_DOUBLE_EQ(d, adv.delta);
  EXPECT_LE(adv.delta, o.epsilon + 1e-6);
}

}  // namespace

TEST(IntervalBounds, HandComputedRow) {
  ModelParams p;
  DenseLayer h;
  h.weight = Matrix(1, 2);
  h.weight(0, 0) = 1.0;
  h.weight(0, 1) = -1.0;
  h.bias = {0.0};
  DenseLayer out;
  out.weight = Matrix(2, 1, 1.0);
  out.bias = {0.0, 0.0};
  p.layers = {h, out};
  const std::vector<double> x0 = {0.5, 0.5};
  const auto b = interval_bounds(p, x0, 0.5, InputBox::uniform(2, 0.0, 1.0));
  EXPECT_NEAR(b.lower[0][0], -1.0, 1e-9);
  EXPECT_NEAR(b.upper[0][0], 1.0, 1e-9);
  EXPECT_EQ(b.phase(0, 0), NeuronPhase::kUnstable);
}

TEST(IntervalBounds, ZeroRadiusCollapsesToForward) {
  Rng rng(3);
  const ModelParams p = random_net(rng, {2, 8, 8, 3}, 0.3);
  const std::vector<double> x0 = {0.25, 0.6};
  const auto b = interval_bounds(p, x0, 0.0, InputBox::uniform(2, 0.0, 1.0));
  const auto trace = forward_trace(p, x0);
  for (std::size_t k = 0; k < b.lower.size(); ++k) {
    for (std::size_t j = 0; j < b.lower[k].size(); ++j) {
      EXPECT_NEAR(b.lower[k][j], trace.pre[k][j], 1e-9);
      EXPECT_NEAR(b.upper[k][j], trace.pre[k][j], 1e-9);
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_LE(b.logit_lower[c], trace.pre.back()[c]);
    EXPECT_GE(b.logit_upper[c], trace.pre.back()[c]);
  }
}

TEST(IntervalBounds, MonteCarloContainment) {
  Rng rng(11);
  const ModelParams p = random_net(rng, {2, 8, 2}, 0.5);
  const InputBox box = InputBox::uniform(2, 0.0, 1.0);
  const std::vector<double> x0 = {0.4, 0.7};
  const double eps = 0.2;
  const auto b = interval_bounds(p, x0, eps, box);
  std::vector<double> x(2);
  for (int s = 0; s < 10000; ++s) {
    for (std::size_t i = 0; i < 2; ++i) x[i] = std::clamp(x0[i] + rng.uniform(-eps, eps), 0.0, 1.0);
    const auto trace = forward_trace(p, x);
    for (std::size_t j = 0; j < 8; ++j) {
      ASSERT_GE(trace.pre[0][j], b.lower[0][j]);
      ASSERT_LE(trace.pre[0][j], b.upper[0][j]);
    }
  }
}

TEST(IntervalBounds, RejectsNegativeEpsilon) {
  Rng rng(1);
  const ModelParams p = random_net(rng, {2, 4, 2}, 0.1);
  const std::vector<double> x0 = {0.5, 0.5};
  EXPECT_THROW(interval_bounds(p, x0, -0.1, InputBox::uniform(2, 0.0, 1.0)), ContractViolation);
}

TEST(MinAdversary, LinearBoundaryBySymmetry) {
  const ModelParams p = linear_two_class();
  const InputBox box = InputBox::uniform(1, 0.0, 1.0);
  const auto o = min_adversary(p, Sample{{0.3}, 1}, 0, 0.5, box);
  ASSERT_EQ(o.status, VerifyStatus::kFound);
  EXPECT_NEAR(o.adversary->delta, 0.2, 1e-6);
  EXPECT_NEAR(o.adversary->x_prime[0], 0.5, 1e-6);
  EXPECT_EQ(o.adversary->target_class, 0);
}

TEST(MinAdversary, LinearBoundaryOutOfReach) {
  const ModelParams p = linear_two_class();
  const auto o = min_adversary(p, Sample{{0.1}, 1}, 0, 0.2, InputBox::uniform(1, 0.0, 1.0));
  EXPECT_EQ(o.status, VerifyStatus::kRobustWithin);
  EXPECT_FALSE(o.adversary.has_value());
  EXPECT_EQ(o.epsilon, 0.2);
}

TEST(MinAdversary, MisclassifiedRoot) {
  const ModelParams p = linear_two_class();
  const auto o = min_adversary(p, Sample{{0.9}, 1}, 0, 0.2, InputBox::uniform(1, 0.0, 1.0));
  EXPECT_EQ(o.status, VerifyStatus::kRootMisclassified);
}

TEST(MinAdversary, TieAtRootCountsAsLowerClass) {
  // at x = 0.5 both logits are equal and class 0 wins the tie
  const ModelParams p = linear_two_class();
  EXPECT_EQ(min_adversary(p, Sample{{0.5}, 1}, 0, 0.2, InputBox::uniform(1, 0.0, 1.0)).status,
            VerifyStatus::kRootMisclassified);
  EXPECT_EQ(min_adversary(p, Sample{{0.5}, 0}, 0, 0.2, InputBox::uniform(1, 0.0, 1.0)).status,
            VerifyStatus::kFound);
}

TEST(MinAdversary, ContractChecks) {
  const ModelParams p = linear_two_class();
  const InputBox box = InputBox::uniform(1, 0.0, 1.0);
  EXPECT_THROW(min_adversary(p, Sample{{1.5}, 1}, 0, 0.2, box), ContractViolation);
  EXPECT_THROW(min_adversary(p, Sample{{0.5, 0.5}, 1}, 0, 0.2, box), ContractViolation);
  EXPECT_THROW(min_adversary(p, Sample{{0.5}, 7}, 0, 0.2, box), ContractViolation);
}

TEST(MinAdversary, MatchesPatternEnumeration) {
  Rng rng(2024);
  const InputBox box = InputBox::uniform(2, 0.0, 1.0);
  const double eps = 0.3;
  const VerifierOptions opts;
  int found = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t classes = 2 + trial % 2;
    const ModelParams p = random_net(rng, {2, 6, classes}, 0.5);
    const std::vector<double> x0 = {rng.uniform(), rng.uniform()};
    const int y = predict(p, x0);
    const auto o = min_adversary(p, Sample{x0, y}, trial, eps, box, opts);
    const auto ref = oracle::pattern_min_adversary(p, {x0[0], x0[1]}, y, eps, opts.flip_margin);
    expect_sound(p, Sample{x0, y}, o, box);
    if (std::isfinite(ref.delta) && ref.delta < eps - 1e-4) {
      ASSERT_EQ(o.status, VerifyStatus::kFound) << "trial " << trial;
      EXPECT_NEAR(o.adversary->delta, ref.delta, 1e-4) << "trial " << trial;
      ++found;
    } else if (!std::isfinite(ref.delta)) {
      EXPECT_EQ(o.status, VerifyStatus::kRobustWithin) << "trial " << trial;
    }
  }
  EXPECT_GT(found, 5);
}

TEST(MinAdversary, SearchModesAgree) {
  Rng rng(99);
  const InputBox box = InputBox::uniform(2, 0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams p = random_net(rng, {2, 8, 3}, 0.5);
    const std::vector<double> x0 = {rng.uniform(), rng.uniform()};
    const Sample root{x0, predict(p, x0)};
    VerifierOptions direct, param, bisect;
    direct.search = RadiusSearch::kDirect;
    param.search = RadiusSearch::kParametric;
    bisect.search = RadiusSearch::kBisection;
    const auto a = min_adversary(p, root, 0, 0.3, box, direct);
    const auto b = min_adversary(p, root, 0, 0.3, box, param);
    const auto c = min_adversary(p, root, 0, 0.3, box, bisect);
    ASSERT_EQ(a.status, b.status) << "trial " << trial;
    ASSERT_EQ(a.status, c.status) << "trial " << trial;
    if (a.found()) {
      EXPECT_NEAR(a.adversary->delta, b.adversary->delta, 1e-4);
      EXPECT_NEAR(a.adversary->delta, c.adversary->delta, 1e-4);
    }
  }
}

TEST(MinAdversary, EnlargingEpsilonNeverHurts) {
  Rng rng(5150);
  const InputBox box = InputBox::uniform(2, 0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams p = random_net(rng, {2, 8, 2}, 0.5);
    const std::vector<double> x0 = {rng.uniform(), rng.uniform()};
    const Sample root{x0, predict(p, x0)};
    const auto small = min_adversary(p, root, 0, 0.15, box);
    const auto large = min_adversary(p, root, 0, 0.4, box);
    if (small.found()) {
      ASSERT_TRUE(large.found());
      EXPECT_LE(large.adversary->delta, small.adversary->delta + 1e-9);
    }
  }
}

TEST(MinAdversary, HigherDimensionalSoundness) {
  Rng rng(8);
  const std::size_t dim = 60;
  const InputBox box = InputBox::uniform(dim, 0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const ModelParams p = random_net(rng, {dim, 16, 4}, 0.2);
    std::vector<double> x0(dim);
    for (double& v : x0) v = rng.uniform();
    const Sample root{x0, predict(p, x0)};
    VerifierOptions direct, param;
    direct.search = RadiusSearch::kDirect;
    param.search = RadiusSearch::kParametric;
    const auto a = min_adversary(p, root, trial, 0.1, box, param);
    const auto b = min_adversary(p, root, trial, 0.1, box, direct);
    expect_sound(p, root, a, box);
    expect_sound(p, root, b, box);
    ASSERT_EQ(a.status, b.status);
    if (a.found()) EXPECT_NEAR(a.adversary->delta, b.adversary->delta, 1e-4);
  }
}

TEST(MinAdversary, NodeBudgetYieldsTimeout) {
  Rng rng(4);
  const std::size_t dim = 20;
  const ModelParams p = random_net(rng, {dim, 32, 32, 3}, 0.1);
  std::vector<double> x0(dim, 0.5);
  const Sample root{x0, predict(p, x0)};
  VerifierOptions opts;
  opts.node_budget = 1;
  const auto o = min_adversary(p, root, 0, 1.0, InputBox::uniform(dim, 0.0, 1.0), opts);
  EXPECT_EQ(o.status, VerifyStatus::kTimeout);
}

TEST(MinAdversaryBatch, OrderIndependentOfPoolWidth) {
  Rng rng(12);
  const ModelParams p = random_net(rng, {2, 8, 3}, 0.5);
  std::vector<Sample> roots;
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> x = {rng.uniform(), rng.uniform()};
    roots.push_back({x, predict(p, x)});
    ids.push_back(100 + i);
  }
  const InputBox box = InputBox::uniform(2, 0.0, 1.0);
  const auto one = min_adversary_batch(p, roots, ids, 0.3, box, {}, 1);
  const auto four = min_adversary_batch(p, roots, ids, 0.3, box, {}, 4);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].status, four[i].status);
    if (one[i].adversary) {
      EXPECT_EQ(one[i].adversary->x_prime, four[i].adversary->x_prime);
      EXPECT_EQ(one[i].adversary->root_id, ids[i]);
    }
  }
}

TEST(QueryLogTest, OneJsonLinePerQuery) {
  const auto path = std::filesystem::temp_directory_path() / "iada_query_log_test.jsonl";
  std::filesystem::remove(path);
  const ModelParams p = linear_two_class();
  std::vector<Sample> roots = {{{0.3}, 1}, {{0.1}, 1}, {{0.9}, 1}};
  std::vector<std::uint64_t> ids = {7, 8, 9};
  {
    QueryLog log(path);
    min_adversary_batch(p, roots, ids, 0.25, InputBox::uniform(1, 0.0, 1.0), {}, 2, &log);
  }
  std::ifstream in(path);
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0]["root_id"], 7);
  EXPECT_EQ(lines[0]["outcome"], "found");
  EXPECT_NEAR(lines[0]["delta"].get<double>(), 0.2, 1e-6);
  EXPECT_EQ(lines[1]["outcome"], "robust_within");
  EXPECT_TRUE(lines[1]["delta"].is_null());
  EXPECT_EQ(lines[2]["outcome"], "root_misclassified");
  EXPECT_TRUE(lines[0].contains("nodes"));
  EXPECT_TRUE(lines[0].contains("seconds"));
  std::filesystem::remove(path);
}

TEST(PerturbationBound, AllMisclassifiedGivesZero) {
  const ModelParams p = linear_two_class();
  std::vector<Sample> test = {{{0.9}, 1}, {{0.1}, 0}};
  const auto rep = average_perturbation_bound(p, test, 0.1, InputBox::uniform(1, 0.0, 1.0));
  EXPECT_EQ(rep.p_b, 0.0);
  EXPECT_EQ(rep.misclassified, 2u);
}

TEST(PerturbationBound, SinglePointUsesItsDelta) {
  const ModelParams p = linear_two_class();
  std::vector<Sample> test = {{{0.45}, 1}};
  const auto rep = average_perturbation_bound(p, test, 0.1, InputBox::uniform(1, 0.0, 1.0));
  EXPECT_NEAR(rep.p_b, 0.05, 1e-6);
  EXPECT_EQ(rep.found, 1u);
}

TEST(PerturbationBound, RobustPointsCountAsEpsilon) {
  const ModelParams p = linear_two_class();
  std::vector<Sample> test = {{{0.1}, 1}, {{0.9}, 0}};
  const auto rep = average_perturbation_bound(p, test, 0.1, InputBox::uniform(1, 0.0, 1.0));
  EXPECT_DOUBLE_EQ(rep.p_b, 0.1);
  EXPECT_EQ(rep.robust, 2u);
}

TEST(PerturbationBound, EmptyTestSetRejected) {
  const ModelParams p = linear_two_class();
  EXPECT_THROW(average_perturbation_bound(p, {}, 0.1, InputBox::uniform(1, 0.0, 1.0)), ContractViolation);
}
