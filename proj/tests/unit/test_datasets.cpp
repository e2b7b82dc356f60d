#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "iada/datasets.hpp"
#include "iada/engine.hpp"
#include "iada/experiment.hpp"

using namespace iada;

namespace {

// The documented geometry, written out independently.
int documented_label(double x, double y) {
  const double cx = (x - 0.32) / 0.2, cy = (y - 0.68) / 0.2;
  const double ex = (x - 0.68) / 0.22, ey = (y - 0.32) / 0.15;
  return (cx * cx + cy * cy <= 1.0 || ex * ex + ey * ey <= 1.0) ? 1 : 0;
}

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

const std::filesystem::path kSample = std::filesystem::path(IADA_DATA_DIR) / "mnist-sample";

}  // namespace

TEST(Ground2D, RegionCentersAndCorner) {
  const double c1[2] = {0.32, 0.68}, c2[2] = {0.68, 0.32}, corner[2] = {0.0, 0.0};
  EXPECT_EQ(ground2d_label(c1), 1);
  EXPECT_EQ(ground2d_label(c2), 1);
  EXPECT_EQ(ground2d_label(corner), 0);
}

TEST(Ground2D, MillionPointSweepMatchesDocumentedGeometry) {
  Rng rng(2024);
  std::size_t ones = 0;
  std::uint64_t h = 1469598103934665603ULL;
  for (int i = 0; i < 1000000; ++i) {
    const double p[2] = {rng.uniform(), rng.uniform()};
    const int y = ground2d_label(p);
    ASSERT_EQ(y, documented_label(p[0], p[1]));
    ones += static_cast<std::size_t>(y);
    h = (h ^ static_cast<std::uint64_t>(y)) * 1099511628211ULL;
  }
  // area pi(0.2^2 + 0.22*0.15) ~ 0.2293
  EXPECT_NEAR(static_cast<double>(ones) / 1e6, M_PI * (0.04 + 0.033), 0.003);
  // second run sees the same labels
  Rng again(2024);
  std::uint64_t h2 = 1469598103934665603ULL;
  for (int i = 0; i < 1000000; ++i) {
    const double p[2] = {again.uniform(), again.uniform()};
    h2 = (h2 ^ static_cast<std::uint64_t>(ground2d_label(p))) * 1099511628211ULL;
  }
  EXPECT_EQ(h, h2);
}

TEST(Ground2D, SamplerLabelsAreExact) {
  Rng rng(5);
  const auto g = Ground2D::standard();
  const auto pts = g.sample(2000, rng);
  ASSERT_EQ(pts.size(), 2000u);
  for (const auto& s : pts) {
    ASSERT_EQ(s.y, documented_label(s.x[0], s.x[1]));
    ASSERT_TRUE(Ground2D::box().contains(s.x));
  }
  Rng rng2(5);
  const auto again = g.sample(2000, rng2);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(pts[i].x, again[i].x);
}

TEST(Idx, RoundTripPlainAndGzip) {
  IdxArray a;
  a.dims = {3, 2, 2};
  for (int i = 0; i < 12; ++i) a.data.push_back(static_cast<std::uint8_t>(i * 21));
  for (bool gz : {false, true}) {
    const auto p = tmp(gz ? "iada_rt.idx.gz" : "iada_rt.idx");
    write_idx(p, a, gz);
    const auto b = read_idx(p);
    EXPECT_EQ(b.dims, a.dims);
    EXPECT_EQ(b.data, a.data);
    EXPECT_EQ(b.magic(), kIdxImagesMagic);
    std::filesystem::remove(p);
  }
}

TEST(Idx, BadMagicNamesOffsetZero) {
  const auto p = tmp("iada_bad_magic.idx");
  write_bytes(p, {0x00, 0x00, 0x09, 0x03, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0});
  try {
    read_idx(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
  std::filesystem::remove(p);
}

TEST(Idx, TruncatedPayloadNamesOffset) {
  const auto p = tmp("iada_trunc.idx");
  // labels header declares 5 bytes, only 3 present: payload starts at 8
  write_bytes(p, {0x00, 0x00, 0x08, 0x01, 0, 0, 0, 5, 1, 2, 3});
  try {
    read_idx(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 11u);
  }
  write_bytes(p, {0x00, 0x00, 0x08, 0x03, 0, 0, 0});
  try {
    read_idx(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GE(e.offset(), 4u);
    EXPECT_LE(e.offset(), 7u);
  }
  std::filesystem::remove(p);
}

TEST(Mnist, SampleFilesLoadAndScale) {
  const auto set = load_mnist(kSample / "t10k-images-idx3-ubyte.gz", kSample / "t10k-labels-idx1-ubyte.gz");
  ASSERT_EQ(set.samples.size(), 1000u);
  for (const auto& s : set.samples) {
    ASSERT_EQ(s.x.size(), 784u);
    ASSERT_GE(s.y, 0);
    ASSERT_LT(s.y, 10);
    ASSERT_TRUE(MnistSet::box().contains(s.x));
  }
}

TEST(Mnist, SubsetDeterministicStratifiedAndSorted) {
  const auto img = kSample / "train-images-idx3-ubyte.gz", lab = kSample / "train-labels-idx1-ubyte.gz";
  const auto a = load_mnist(img, lab, 500, 3);
  const auto b = load_mnist(img, lab, 500, 3);
  const auto c = load_mnist(img, lab, 500, 4);
  ASSERT_EQ(a.samples.size(), 500u);
  EXPECT_EQ(a.source_index, b.source_index);
  EXPECT_NE(a.source_index, c.source_index);
  EXPECT_TRUE(std::is_sorted(a.source_index.begin(), a.source_index.end()));
  std::array<int, 10> counts{}, pool{};
  for (const auto& s : a.samples) ++counts[static_cast<std::size_t>(s.y)];
  const auto all = load_mnist(img, lab);
  for (const auto& s : all.samples) ++pool[static_cast<std::size_t>(s.y)];
  // largest-remainder quotas are within one of the proportional share
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_NEAR(counts[k], 500.0 * pool[k] / static_cast<double>(all.samples.size()), 1.0);
  }
}

TEST(Mnist, ZeroSubsetIsEmpty) {
  const auto set =
      load_mnist(kSample / "t10k-images-idx3-ubyte.gz", kSample / "t10k-labels-idx1-ubyte.gz", 0, 1);
  EXPECT_TRUE(set.samples.empty());
}

TEST(Mnist, StratifiedQuotasLargestRemainder) {
  // 7 of class 0, 3 of class 1; size 5 -> quotas 3.5 / 1.5 -> 4 / 1 or 3 / 2 by remainder tie, lowest class first
  const std::vector<int> labels = {0, 0, 0, 0, 0, 0, 0, 1, 1, 1};
  const auto idx = stratified_subset(labels, 5, 9);
  ASSERT_EQ(idx.size(), 5u);
  int zeros = 0;
  for (auto i : idx) zeros += labels[i] == 0;
  EXPECT_TRUE(zeros == 3 || zeros == 4);
  EXPECT_EQ(stratified_subset(labels, 100, 9).size(), labels.size());
}

TEST(Mnist, OfficialTestFileFirstLabel) {
  const char* dir = std::getenv("IADA_MNIST_OFFICIAL_DIR");
  if (dir == nullptr) GTEST_SKIP() << "IADA_MNIST_OFFICIAL_DIR not set";
  const std::filesystem::path d(dir);
  const auto set = load_mnist(d / "t10k-images-idx3-ubyte.gz", d / "t10k-labels-idx1-ubyte.gz");
  ASSERT_EQ(set.samples.size(), 10000u);
  EXPECT_EQ(set.samples.front().y, 7);
}

TEST(Trajectory, OnePerClassWithinVelocityCap) {
  const auto w = gen_trajectories(4, 1);
  ASSERT_EQ(w.size(), 4u);
  std::array<int, 4> seen{};
  for (const auto& t : w) {
    ASSERT_EQ(t.x.size(), kTrajectoryDim);
    ++seen[static_cast<std::size_t>(t.label)];
    EXPECT_LE(max_step_displacement(t.x), kVelocityCap);
    EXPECT_TRUE(trajectory_box().contains(t.x));
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Trajectory, BalancedAndCapCompliantAtScale) {
  const auto w = gen_trajectories(1001, 2);
  std::array<int, 4> seen{};
  for (const auto& t : w) {
    ++seen[static_cast<std::size_t>(t.label)];
    ASSERT_LE(max_step_displacement(t.x), kVelocityCap);
  }
  for (int s : seen) EXPECT_NEAR(s, 250, 1);
}

TEST(Trajectory, ZeroNoiseReproducesArchetypes) {
  for (const auto& t : gen_trajectories(40, 3, 0.0)) {
    EXPECT_EQ(t.x, archetype_window(static_cast<Intention>(t.label), t.phase));
  }
}

TEST(Trajectory, LearnableAboveNinetyPercent) {
  const auto train = to_samples(gen_trajectories(1000, 11));
  const auto test = to_samples(gen_trajectories(1000, 12));
  TrainConfig cfg;
  cfg.dims = {kTrajectoryDim, 32, static_cast<std::size_t>(kIntentionCount)};
  cfg.epochs = 200;
  cfg.batch_size = 64;
  cfg.seed = 1;
  cfg.domain = trajectory_box();
  const auto params = train_regular(train, cfg);
  EXPECT_GT(accuracy(params, test), 0.90);
}
