#pragma once

#include <span>
#include <vector>

#include "iada/input_box.hpp"
#include "iada/nn.hpp"

namespace iada {

// Interval bounds on the logits over the eps-ball around one sample.
struct WorstCaseLogits {
  int label = 0;
  std::vector<double> lower;
  std::vector<double> upper;
  // margins[j] <= logit_label - logit_j anywhere in the ball; margins[label] = 0.
  std::vector<double> margins;
};

// Sound (outward-rounded) bounds, for checking and reporting.
WorstCaseLogits worst_case_logits(const ModelParams& params, const Sample& sample, double epsilon,
                                  const InputBox& domain);

// Logit vector with the true class at its lower bound and every other class at
// its upper bound. Equals forward() when epsilon is 0.
std::vector<double> pessimized_logits(const ModelParams& params, const Sample& sample, double epsilon,
                                      const InputBox& domain);

// Mean cross-entropy of the pessimized logits.
double robust_loss(const ModelParams& params, std::span<const Sample> batch, double epsilon, const InputBox& domain);
double robust_loss(const ModelParams& params, std::span<const Sample* const> batch, double epsilon,
                   const InputBox& domain);

// Gradient of robust_loss. With epsilon 0 it is bit-identical to backward().
Gradient robust_backward(const ModelParams& params, std::span<const Sample> batch, double epsilon,
                         const InputBox& domain);
Gradient robust_backward(const ModelParams& params, std::span<const Sample* const> batch, double epsilon,
                         const InputBox& domain);

}  // namespace iada
