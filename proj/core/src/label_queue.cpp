#include "iada/label_queue.hpp"

namespace iada {

std::string_view to_string(RenderHint hint) {
  switch (hint) {
    case RenderHint::kPoint2D: return "2d-point";
    case RenderHint::kDigitImage: return "digit-image";
    case RenderHint::kTrajectory: return "trajectory";
  }
  return "unknown";
}

std::uint64_t LabelQueue::enqueue(LabelRequest request) {
  if (request.class_count < 1) throw ContractViolation("label request needs a class count");
  std::lock_guard<std::mutex> lock(mu_);
  request.id = next_id_++;
  request.enqueued_at = std::chrono::system_clock::now();
  const std::uint64_t id = request.id;
  entries_.emplace(id, Entry{std::move(request), false, {}});
  return id;
}

std::vector<LabelRequest> LabelQueue::pending() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<LabelRequest> out;
  for (const auto& [id, e] : entries_) {
    if (!e.resolved) out.push_back(e.request);
  }
  return out;
}

std::size_t LabelQueue::pending_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size() - resolved_;
}

std::size_t LabelQueue::resolved_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return resolved_;
}

ResolveResult LabelQueue::resolve(std::uint64_t id, LabelOutcome outcome) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return ResolveResult::kUnknownId;
    Entry& e = it->second;
    if (e.resolved) return ResolveResult::kConflict;
    if (outcome.kind == LabelOutcomeKind::kLabeled &&
        (outcome.label < 0 || outcome.label >= e.request.class_count)) {
      return ResolveResult::kOutOfRange;
    }
    e.resolved = true;
    e.outcome = outcome;
    ++resolved_;
  }
  changed_.notify_all();
  return ResolveResult::kOk;
}

ResolveResult LabelQueue::label(std::uint64_t id, int cls) { return resolve(id, {LabelOutcomeKind::kLabeled, cls}); }

ResolveResult LabelQueue::decline(std::uint64_t id) { return resolve(id, {LabelOutcomeKind::kDeclined, -1}); }

ResolveResult LabelQueue::expire(std::uint64_t id) { return resolve(id, {LabelOutcomeKind::kTimedOut, -1}); }

std::vector<LabelOutcome> LabelQueue::wait(std::span<const std::uint64_t> ids, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::unique_lock<std::mutex> lock(mu_);
  auto all_done = [&] {
    for (auto id : ids) {
      auto it = entries_.find(id);
      if (it == entries_.end()) throw ContractViolation("waiting on an unknown label request");
      if (!it->second.resolved) return false;
    }
    return true;
  };
  changed_.wait_until(lock, deadline, all_done);
  std::vector<LabelOutcome> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    Entry& e = entries_.at(id);
    if (!e.resolved) {
      e.resolved = true;
      e.outcome = {LabelOutcomeKind::kTimedOut, -1};
      ++resolved_;
    }
    out.push_back(e.outcome);
  }
  return out;
}

}  // namespace iada
