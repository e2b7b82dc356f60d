#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "iada/input_box.hpp"
#include "iada/nn.hpp"
#include "iada/random.hpp"

namespace iada {

// ---- 2D two-class ground truth -------------------------------------------

// Axis-aligned ellipse; a circle when rx == ry.
struct Blob {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const;
};

// Class 1 inside any blob, class 0 elsewhere in [0,1]^2.
struct Ground2D {
  std::vector<Blob> blobs;

  // The default truth: a circle in the upper-left, an ellipse in the lower-right.
  static Ground2D standard();

  int label(std::span<const double> x) const;
  // n points drawn uniformly from [0,1]^2, labelled by label().
  std::vector<Sample> sample(std::size_t n, Rng& rng) const;
  static InputBox box() { return InputBox::uniform(2, 0.0, 1.0); }
};

int ground2d_label(std::span<const double> x);

// ---- MNIST IDX ------------------------------------------------------------

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Unsigned-byte IDX tensor.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
  std::uint32_t magic() const { return 0x00000800u | static_cast<std::uint32_t>(dims.size()); }
};

// Reads plain or gzip-compressed IDX files (detected from content).
IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array, bool gzip);

struct MnistSet {
  std::vector<Sample> samples;  // x has 784 pixels scaled to [0,1]
  std::vector<std::size_t> source_index;  // row in the IDX file
  static InputBox box() { return InputBox::uniform(784, 0.0, 1.0); }
};

inline constexpr std::size_t kAllSamples = std::numeric_limits<std::size_t>::max();

// Seeded class-stratified subset of the given size (largest-remainder
// quotas), in file order. kAllSamples or any size >= the file count returns
// every sample.
MnistSet load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels,
                    std::size_t subset_size = kAllSamples, std::uint64_t seed = 0);

// Indices picked by load_mnist for the given labels.
std::vector<std::size_t> stratified_subset(std::span<const int> labels, std::size_t size, std::uint64_t seed);

// ---- synthetic trajectory windows -----------------------------------------

inline constexpr std::size_t kTrajectorySteps = 10;
inline constexpr std::size_t kTrajectoryDim = kTrajectorySteps * 2 * 3;  // steps x wrists x xyz
inline constexpr double kVelocityCap = 0.05;  // per step, per axis

enum class Intention : int { kAssembling = 0, kRetrieving = 1, kReaching = 2, kAbnormal = 3 };
inline constexpr int kIntentionCount = 4;
const char* intention_name(int label);

struct TrajectoryWindow {
  std::vector<double> x;  // index = step * 6 + wrist * 3 + axis
  int label = 0;
  double phase = 0.0;  // position along the archetype's motion
};

// Noise-free window of an archetype starting at `phase` (in steps).
std::vector<double> archetype_window(Intention intention, double phase);

// n windows, classes balanced (counts differ by at most one) and shuffled.
// noise = 0 yields exact archetype windows.
std::vector<TrajectoryWindow> gen_trajectories(std::size_t n, std::uint64_t seed, double noise = 1.0);
std::vector<Sample> to_samples(const std::vector<TrajectoryWindow>& windows);

// Largest per-axis displacement between consecutive steps.
double max_step_displacement(std::span<const double> window);

inline InputBox trajectory_box() { return InputBox::uniform(kTrajectoryDim, 0.0, 1.0); }

}  // namespace iada
