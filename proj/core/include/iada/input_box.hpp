#pragma once

#include <span>
#include <vector>

namespace iada {

// Axis-aligned input domain, e.g. [0,1]^784 for images.
struct InputBox {
  std::vector<double> lower;
  std::vector<double> upper;

  static InputBox uniform(std::size_t dim, double lo, double hi) {
    return {std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  }
  std::size_t dim() const { return lower.size(); }
  bool contains(std::span<const double> x, double tol = 0.0) const;
  void clamp(std::span<double> x) const;
};

}  // namespace iada
