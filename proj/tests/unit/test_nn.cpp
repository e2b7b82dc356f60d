#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "iada/checkpoint.hpp"
#include "iada/nn.hpp"
#include "oracles/reference_net.hpp"

using namespace iada;

namespace {

ModelParams random_net(Rng& rng, std::vector<std::size_t> dims) {
  ModelParams p = init_params(dims, rng);
  for (auto& layer : p.layers) {
    for (double& b : layer.bias) b = rng.uniform(-0.5, 0.5);
  }
  return p;
}

std::vector<Sample> random_batch(Rng& rng, std::size_t n, std::size_t dim, int classes) {
  std::vector<Sample> out(n);
  for (auto& s : out) {
    s.x.resize(dim);
    for (double& v : s.x) v = rng.uniform();
    s.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  }
  return out;
}

oracle::PiecewiseLoss ref_mean_ce(const std::vector<Sample>& batch) {
  return [&batch](const ModelParams& p, std::vector<std::int8_t>& sig) {
    oracle::LD total = 0;
    for (const auto& s : batch) {
      auto f = oracle::ref_forward(p, s.x);
      sig.insert(sig.end(), f.pattern.begin(), f.pattern.end());
      total += oracle::ref_cross_entropy(f.logits, s.y);
    }
    return total / static_cast<oracle::LD>(batch.size());
  };
}

}  // namespace

TEST(Forward, IdentityLayer) {
  ModelParams p;
  DenseLayer l;
  l.weight = Matrix(2, 2);
  l.weight(0, 0) = l.weight(1, 1) = 1.0;
  l.bias = {0.0, 0.0};
  p.layers.push_back(l);
  const std::vector<double> x = {0.3, 0.7};
  const auto z = forward(p, x);
  EXPECT_DOUBLE_EQ(z[0], 0.3);
  EXPECT_DOUBLE_EQ(z[1], 0.7);
  EXPECT_EQ(predict(p, x), 1);
}

TEST(Forward, ReluKill) {
  ModelParams p;
  DenseLayer h, o;
  h.weight = Matrix(1, 1, -1.0);
  h.bias = {0.0};
  o.weight = Matrix(1, 1, 1.0);
  o.bias = {0.0};
  p.layers = {h, o};
  const std::vector<double> x = {0.5};
  const auto t = forward_trace(p, x);
  EXPECT_DOUBLE_EQ(t.pre[0][0], -0.5);
  EXPECT_DOUBLE_EQ(t.post[1][0], 0.0);
  EXPECT_DOUBLE_EQ(t.logits()[0], 0.0);
}

TEST(Forward, MatchesStraightLineOracle) {
  Rng rng(11);
  const ModelParams p = random_net(rng, {2, 16, 3});
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> x = {rng.uniform(), rng.uniform()};
    const auto z = forward(p, x);
    const auto ref = oracle::ref_forward(p, x).logits;
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_LE(std::abs(z[k] - static_cast<double>(ref[k])), 1e-6 * std::max(1.0, std::abs(z[k])));
    }
  }
}

TEST(Forward, DeterministicAndTieBreak) {
  Rng rng(5);
  const ModelParams p = random_net(rng, {3, 8, 4});
  const std::vector<double> x = {0.1, 0.2, 0.3};
  EXPECT_EQ(forward(p, x), forward(p, x));
  const std::vector<double> tied = {1.0, 2.0, 2.0, 0.5};
  EXPECT_EQ(argmax(tied), 1);
}

TEST(Forward, DimensionMismatchThrows) {
  Rng rng(1);
  const ModelParams p = random_net(rng, {2, 4, 2});
  const std::vector<double> x = {0.1, 0.2, 0.3};
  EXPECT_THROW(forward(p, x), ContractViolation);
}

TEST(CrossEntropy, UniformLogits) {
  const std::vector<double> z(4, 0.7);
  for (int y = 0; y < 4; ++y) EXPECT_NEAR(cross_entropy(z, y), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, LargeLogitsStable) {
  const std::vector<double> z = {1000.0, 0.0};
  const double loss = cross_entropy(z, 0);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 0.0, 1e-12);
  EXPECT_NEAR(cross_entropy(z, 1), 1000.0, 1e-9);
}

TEST(CrossEntropy, MatchesExtendedPrecision) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = 2 + rng.below(9);
    std::vector<double> z(k);
    std::vector<oracle::LD> zl(k);
    for (std::size_t i = 0; i < k; ++i) {
      z[i] = rng.uniform(-20.0, 20.0);
      zl[i] = z[i];
    }
    const int y = static_cast<int>(rng.below(k));
    const double ref = static_cast<double>(oracle::ref_cross_entropy(zl, y));
    EXPECT_LE(std::abs(cross_entropy(z, y) - ref), 1e-10 * std::max(ref, 1e-300)) << "trial " << t;
  }
}

TEST(CrossEntropy, ShiftInvariantAndNonNegative) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(5);
    for (double& v : z) v = rng.uniform(-5.0, 5.0);
    std::vector<double> shifted = z;
    for (double& v : shifted) v += 37.5;
    EXPECT_LT(std::abs(cross_entropy(z, 2) - cross_entropy(shifted, 2)), 1e-9);
    EXPECT_GE(cross_entropy(z, 2), 0.0);
  }
}

TEST(Backward, FiniteDifferences282) {
  Rng rng(21);
  const ModelParams p = random_net(rng, {2, 8, 2});
  const auto batch = random_batch(rng, 5, 2, 2);
  const auto cmp = oracle::compare_fd(p, backward(p, batch), ref_mean_ce(batch));
  EXPECT_GT(cmp.checked, 20u);
  EXPECT_LT(cmp.worst_rel_err, 1e-4);
}

TEST(Backward, FiniteDifferencesDeeperNets) {
  Rng rng(22);
  for (int t = 0; t < 10; ++t) {
    std::vector<std::size_t> dims = {1 + rng.below(4)};
    const std::size_t layers = 1 + rng.below(3);
    for (std::size_t l = 0; l + 1 < layers; ++l) dims.push_back(2 + rng.below(7));
    dims.push_back(2 + rng.below(3));
    const ModelParams p = random_net(rng, dims);
    const auto batch = random_batch(rng, 1 + rng.below(6), dims.front(), static_cast<int>(dims.back()));
    const auto cmp = oracle::compare_fd(p, backward(p, batch), ref_mean_ce(batch));
    EXPECT_LT(cmp.worst_rel_err, 1e-4) << "trial " << t;
  }
}

TEST(Backward, ZeroLossGivesZeroGradient) {
  ModelParams p;
  DenseLayer l;
  l.weight = Matrix(2, 1);
  l.bias = {100.0, -100.0};
  p.layers.push_back(l);
  const std::vector<Sample> batch = {{{0.2}, 0}, {{0.9}, 0}};
  EXPECT_LT(l2_norm(backward(p, batch)), 1e-8);
}

TEST(Backward, MeanInvariance) {
  Rng rng(7);
  const ModelParams p = random_net(rng, {3, 6, 3});
  const auto batch = random_batch(rng, 4, 3, 3);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const auto g1 = backward(p, batch);
  const auto g2 = backward(p, doubled);
  std::vector<double> a, b;
  g1.for_each([&](double v) { a.push_back(v); });
  g2.for_each([&](double v) { b.push_back(v); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14 * std::max(1.0, std::abs(a[i])));
}

TEST(Backward, EmptyBatchThrows) {
  Rng rng(1);
  const ModelParams p = random_net(rng, {2, 4, 2});
  EXPECT_THROW(backward(p, std::span<const Sample>{}), ContractViolation);
}

TEST(Adam, ZeroGradientLeavesParams) {
  Rng rng(2);
  ModelParams p = random_net(rng, {2, 4, 2});
  const ModelParams before = p;
  AdamState st(p, {});
  adam_step(p, zeros_like(p), st);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepClosedForm) {
  Rng rng(3);
  ModelParams p = random_net(rng, {2, 4, 2});
  const ModelParams before = p;
  Gradient g = zeros_like(p);
  Rng grng(9);
  g.for_each([&](double& v) { v = grng.uniform(-2.0, 2.0); });
  AdamConfig cfg;
  AdamState st(p, cfg);
  adam_step(p, g, st);
  // m_hat = g, v_hat = g^2 after bias correction
  std::vector<double> b0, b1, gv;
  before.for_each([&](double v) { b0.push_back(v); });
  p.for_each([&](double v) { b1.push_back(v); });
  g.for_each([&](double v) { gv.push_back(v); });
  for (std::size_t i = 0; i < b0.size(); ++i) {
    const double expected = b0[i] - cfg.learning_rate * gv[i] / (std::abs(gv[i]) + cfg.epsilon);
    EXPECT_NEAR(b1[i], expected, 1e-12);
  }
}

TEST(Adam, ShapeMismatchThrows) {
  Rng rng(3);
  ModelParams p = random_net(rng, {2, 4, 2});
  AdamState st(p, {});
  Rng r2(4);
  const Gradient wrong = zeros_like(random_net(r2, {2, 5, 2}));
  EXPECT_THROW(adam_step(p, wrong, st), ContractViolation);
}

TEST(Adam, HundredStepsDeterministic) {
  auto run = [] {
    Rng rng(42);
    ModelParams p = init_params(std::vector<std::size_t>{2, 8, 2}, rng);
    const auto batch = random_batch(rng, 16, 2, 2);
    AdamState st(p, {});
    for (int i = 0; i < 100; ++i) adam_step(p, backward(p, batch), st);
    return p;
  };
  EXPECT_EQ(run(), run());
}

TEST(Init, GlorotRange) {
  Rng rng(8);
  const std::vector<std::size_t> dims = {784, 32, 10};
  const ModelParams p = init_params(dims, rng);
  const double l0 = std::sqrt(6.0 / (784 + 32));
  for (double w : p.layers[0].weight.data) EXPECT_LE(std::abs(w), l0);
  for (double b : p.layers[0].bias) EXPECT_EQ(b, 0.0);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(12);
  const ModelParams p = random_net(rng, {5, 7, 3});
  const auto path = std::filesystem::temp_directory_path() / "iada_ckpt_roundtrip.json";
  save_checkpoint(path, p, {{"note", "unit"}});
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.params, p);
  EXPECT_EQ(back.config.at("note"), "unit");
  std::filesystem::remove(path);
}
