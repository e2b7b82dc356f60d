#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string_view>
#include <vector>

#include "iada/nn.hpp"

namespace iada {

enum class RenderHint : std::uint8_t { kPoint2D, kDigitImage, kTrajectory };
std::string_view to_string(RenderHint hint);

struct LabelRequest {
  std::uint64_t id = 0;  // assigned by LabelQueue::enqueue
  std::vector<double> adversary;
  Sample root;
  double delta = 0.0;
  RenderHint hint = RenderHint::kPoint2D;
  int class_count = 2;
  std::chrono::system_clock::time_point enqueued_at;
};

enum class LabelOutcomeKind : std::uint8_t { kLabeled, kDeclined, kTimedOut };

struct LabelOutcome {
  LabelOutcomeKind kind = LabelOutcomeKind::kDeclined;
  int label = -1;  // valid for kLabeled
};

enum class ResolveResult : std::uint8_t { kOk, kUnknownId, kOutOfRange, kConflict };

// Pending label requests shared between the training loop and the HTTP
// service. Every request is resolved exactly once: labelled, declined or
// expired; later attempts report kConflict.
class LabelQueue {
 public:
  std::uint64_t enqueue(LabelRequest request);

  // Unresolved requests, oldest first.
  std::vector<LabelRequest> pending() const;
  std::size_t pending_count() const;

  ResolveResult label(std::uint64_t id, int cls);
  ResolveResult decline(std::uint64_t id);
  ResolveResult expire(std::uint64_t id);

  // Blocks until every id is resolved or the timeout passes; stragglers are
  // expired. Outcomes come back in the order of `ids`.
  std::vector<LabelOutcome> wait(std::span<const std::uint64_t> ids, std::chrono::milliseconds timeout);

  std::size_t resolved_count() const;

 private:
  struct Entry {
    LabelRequest request;
    bool resolved = false;
    LabelOutcome outcome;
  };
  ResolveResult resolve(std::uint64_t id, LabelOutcome outcome);

  mutable std::mutex mu_;
  std::condition_variable changed_;
  std::map<std::uint64_t, Entry> entries_;  // id order == enqueue order
  std::uint64_t next_id_ = 1;
  std::size_t resolved_ = 0;
};

}  // namespace iada
