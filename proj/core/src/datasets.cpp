#include "iada/datasets.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>

namespace iada {

// ---- 2D ---------------------------------------------------------------------

bool Blob::contains(double x, double y) const {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

Ground2D Ground2D::standard() {
  return Ground2D{{Blob{0.32, 0.68, 0.20, 0.20}, Blob{0.68, 0.32, 0.22, 0.15}}};
}

int Ground2D::label(std::span<const double> x) const {
  if (x.size() != 2) throw ContractViolation("2D ground truth takes 2 coordinates");
  for (const auto& b : blobs) {
    if (b.contains(x[0], x[1])) return 1;
  }
  return 0;
}

std::vector<Sample> Ground2D::sample(std::size_t n, Rng& rng) const {
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x = {rng.uniform(), rng.uniform()};
    const int y = label(x);
    out.push_back({std::move(x), y});
  }
  return out;
}

int ground2d_label(std::span<const double> x) {
  static const Ground2D truth = Ground2D::standard();
  return truth.label(x);
}

// ---- IDX --------------------------------------------------------------------

namespace {

struct GzCloser {
  void operator()(gzFile_s* f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

std::uint32_t big_endian(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

// Reads up to n bytes; returns the count actually read.
std::size_t read_some(gzFile f, void* buf, std::size_t n) {
  std::size_t total = 0;
  auto* out = static_cast<std::uint8_t*>(buf);
  while (total < n) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - total, 1u << 30));
    const int got = gzread(f, out + total, chunk);
    if (got < 0) throw std::runtime_error("gzip stream error");
    if (got == 0) break;
    total += static_cast<std::size_t>(got);
  }
  return total;
}

}  // namespace

IdxArray read_idx(const std::filesystem::path& path) {
  GzHandle f(gzopen(path.string().c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::uint8_t head[4];
  if (read_some(f.get(), head, 4) != 4) throw ParseError(path.string() + ": truncated header", 0);
  if (head[0] != 0 || head[1] != 0 || head[2] != 0x08 || head[3] == 0) {
    throw ParseError(path.string() + ": bad magic number 0x" + [&] {
      char buf[9];
      std::snprintf(buf, sizeof buf, "%08x", big_endian(head));
      return std::string(buf);
    }(), 0);
  }
  IdxArray arr;
  std::uint64_t offset = 4;
  std::uint64_t count = 1;
  for (std::uint8_t d = 0; d < head[3]; ++d) {
    std::uint8_t b[4];
    if (read_some(f.get(), b, 4) != 4) throw ParseError(path.string() + ": truncated dimension list", offset);
    arr.dims.push_back(big_endian(b));
    count *= arr.dims.back();
    offset += 4;
  }
  arr.data.resize(count);
  const std::size_t got = read_some(f.get(), arr.data.data(), count);
  if (got != count) {
    throw ParseError(path.string() + ": truncated data, expected " + std::to_string(count) + " bytes, got " +
                         std::to_string(got),
                     offset + got);
  }
  return arr;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array, bool gzip) {
  std::uint64_t count = 1;
  for (auto d : array.dims) count *= d;
  if (count != array.data.size()) throw ContractViolation("IDX dims do not match data size");
  std::vector<std::uint8_t> bytes = {0, 0, 0x08, static_cast<std::uint8_t>(array.dims.size())};
  for (auto d : array.dims) {
    for (int shift = 24; shift >= 0; shift -= 8) bytes.push_back(static_cast<std::uint8_t>(d >> shift));
  }
  bytes.insert(bytes.end(), array.data.begin(), array.data.end());
  if (gzip) {
    GzHandle f(gzopen(path.string().c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write " + path.string());
    if (gzwrite(f.get(), bytes.data(), static_cast<unsigned>(bytes.size())) != static_cast<int>(bytes.size())) {
      throw std::runtime_error("gzip write failed for " + path.string());
    }
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

std::vector<std::size_t> stratified_subset(std::span<const int> labels, std::size_t size, std::uint64_t seed) {
  if (size >= labels.size()) {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  if (size == 0) return {};
  int classes = 0;
  for (int y : labels) classes = std::max(classes, y + 1);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  // largest-remainder quotas, ties to the lower class
  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = static_cast<double>(size) * static_cast<double>(by_class[c].size()) /
                         static_cast<double>(labels.size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < size; ++i) {
    const std::size_t c = remainders[i % remainders.size()].second;
    if (quota[c] < by_class[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    rng.shuffle(idx);
    picked.insert(picked.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

MnistSet load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels,
                    std::size_t subset_size, std::uint64_t seed) {
  const IdxArray img = read_idx(images);
  const IdxArray lab = read_idx(labels);
  if (img.magic() != kIdxImagesMagic) throw ParseError(images.string() + ": expected a 3-dimensional image file", 3);
  if (lab.magic() != kIdxLabelsMagic) throw ParseError(labels.string() + ": expected a 1-dimensional label file", 3);
  const std::size_t n = img.dims[0];
  if (lab.dims[0] != n) {
    throw ParseError(labels.string() + ": label count " + std::to_string(lab.dims[0]) + " differs from image count " +
                         std::to_string(n),
                     4);
  }
  const std::size_t pixels = std::size_t{img.dims[1]} * img.dims[2];
  if (pixels != 784) throw ParseError(images.string() + ": expected 28x28 images", 8);

  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (lab.data[i] > 9) throw ParseError(labels.string() + ": label out of range", 8 + i);
    y[i] = lab.data[i];
  }
  MnistSet set;
  set.source_index = stratified_subset(y, subset_size, seed);
  set.samples.reserve(set.source_index.size());
  for (std::size_t i : set.source_index) {
    Sample s;
    s.x.resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) s.x[p] = img.data[i * pixels + p] / 255.0;
    s.y = y[i];
    set.samples.push_back(std::move(s));
  }
  return set;
}

// ---- trajectories -----------------------------------------------------------

const char* intention_name(int label) {
  switch (label) {
    case 0: return "assembling";
    case 1: return "retrieving";
    case 2: return "reaching";
    case 3: return "abnormal";
  }
  return "unknown";
}

namespace {

constexpr double kTwoPi = 6.283185307179586;

// Triangle wave in [-0.06, 0.06] with slope 0.03 per step.
double tri(double t) {
  const double u = t / 8.0 - std::floor(t / 8.0);
  return 0.12 * std::abs(2.0 * u - 1.0) - 0.06;
}

// Position of one wrist (0 right, 1 left) at time t.
std::array<double, 3> wrist(Intention k, int w, double t) {
  switch (k) {
    case Intention::kAssembling: {
      const double a = 0.35 * t;
      const double s = w == 0 ? 1.0 : -1.0;
      return {0.5 + s * 0.05 + s * 0.06 * std::cos(a), 0.45 + s * 0.06 * std::sin(a), 0.35};
    }
    case Intention::kRetrieving: {
      const double a = 0.14 * t;
      if (w == 0) return {0.65 + 0.18 * std::sin(a), 0.50, 0.40 + 0.05 * std::sin(a)};
      return {0.35, 0.45 + 0.02 * std::sin(kTwoPi * t / 20.0), 0.35};
    }
    case Intention::kReaching: {
      const double x = w == 0 ? 0.58 : 0.42;
      return {x, 0.25 + 0.025 * t, 0.45 + 0.01 * t};
    }
    case Intention::kAbnormal: {
      if (w == 0) return {0.70 + tri(t), 0.30, 0.75 + tri(t + 2.0)};
      return {0.30 - tri(t + 4.0), 0.30, 0.75 + tri(t)};
    }
  }
  return {0.0, 0.0, 0.0};
}

double phase_span(Intention k) { return k == Intention::kReaching ? 10.0 : 20.0; }

}  // namespace

std::vector<double> archetype_window(Intention intention, double phase) {
  std::vector<double> x(kTrajectoryDim);
  for (std::size_t s = 0; s < kTrajectorySteps; ++s) {
    for (int w = 0; w < 2; ++w) {
      const auto p = wrist(intention, w, phase + static_cast<double>(s));
      for (std::size_t a = 0; a < 3; ++a) x[s * 6 + static_cast<std::size_t>(w) * 3 + a] = p[a];
    }
  }
  return x;
}

std::vector<TrajectoryWindow> gen_trajectories(std::size_t n, std::uint64_t seed, double noise) {
  if (!(noise >= 0.0)) throw ContractViolation("noise amplitude must be non-negative");
  Rng rng(seed);
  std::vector<TrajectoryWindow> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TrajectoryWindow win;
    win.label = static_cast<int>(i % kIntentionCount);
    const auto kind = static_cast<Intention>(win.label);
    win.phase = rng.uniform(0.0, phase_span(kind));
    win.x = archetype_window(kind, win.phase);
    if (noise > 0.0) {
      for (std::size_t c = 0; c < 6; ++c) {
        double offset = rng.uniform(-0.04, 0.04) * noise;
        for (std::size_t s = 0; s < kTrajectorySteps; ++s) {
          if (s > 0) offset += rng.uniform(-0.015, 0.015) * noise;
          double& v = win.x[s * 6 + c];
          v = std::clamp(v + offset, 0.0, 1.0);
        }
      }
    }
    out.push_back(std::move(win));
  }
  rng.shuffle(out);
  return out;
}

std::vector<Sample> to_samples(const std::vector<TrajectoryWindow>& windows) {
  std::vector<Sample> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back({w.x, w.label});
  return out;
}

double max_step_displacement(std::span<const double> window) {
  if (window.size() != kTrajectoryDim) throw ContractViolation("trajectory window must have 60 values");
  double m = 0.0;
  for (std::size_t s = 1; s < kTrajectorySteps; ++s) {
    for (std::size_t c = 0; c < 6; ++c) m = std::max(m, std::abs(window[s * 6 + c] - window[(s - 1) * 6 + c]));
  }
  return m;
}

}  // namespace iada
