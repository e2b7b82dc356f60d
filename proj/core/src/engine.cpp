#include "iada/engine.hpp"

#include <chrono>
#include <string>

#include "iada/robust.hpp"

namespace iada {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kOriginal: return "original";
    case Provenance::kHumanLabeled: return "human-labeled";
    case Provenance::kAssumed: return "assumed";
  }
  return "unknown";
}

// ---- LabeledSet -------------------------------------------------------------

const StoredSample& LabeledSet::append(StoredSample s) {
  const bool assumed = s.provenance == Provenance::kAssumed;
  if (assumed != (kind_ == Kind::kAssumed)) {
    throw ContractViolation(std::string("a ") + std::string(to_string(s.provenance)) + " sample cannot go into " +
                            (kind_ == Kind::kAssumed ? "D_adv" : "D0"));
  }
  if (index_.count(s.id) != 0) throw ContractViolation("duplicate sample id " + std::to_string(s.id));
  index_.emplace(s.id, items_.size());
  items_.push_back(std::move(s));
  return items_.back();
}

void LabeledSet::clear() {
  if (kind_ != Kind::kAssumed) throw ContractViolation("D0 is never cleared");
  items_.clear();
  index_.clear();
}

const StoredSample* LabeledSet::find(std::uint64_t id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &items_[it->second];
}

std::vector<std::uint64_t> LabeledSet::ids() const {
  std::vector<std::uint64_t> out;
  out.reserve(items_.size());
  for (const auto& s : items_) out.push_back(s.id);
  return out;
}

// ---- VerifyQueue --------------------------------------------------------------

bool VerifyQueue::before(const VerifyQueueEntry& a, const VerifyQueueEntry& b) {
  if (a.level != b.level) return a.level < b.level;
  if (a.last_delta.has_value() != b.last_delta.has_value()) return !a.last_delta.has_value();
  if (a.last_delta && *a.last_delta != *b.last_delta) return *a.last_delta < *b.last_delta;
  return a.seq < b.seq;
}

void VerifyQueue::push(std::uint64_t sample_id, int level, std::optional<double> last_delta) {
  if (level < 0) throw ContractViolation("negative queue level");
  if (last_delta && !(*last_delta >= 0.0)) throw ContractViolation("queue delta must be non-negative");
  heap_.push(VerifyQueueEntry{sample_id, level, last_delta, seq_++});
}

VerifyQueueEntry VerifyQueue::pop() {
  if (heap_.empty()) throw ContractViolation("pop from an empty verification queue");
  VerifyQueueEntry e = heap_.top();
  heap_.pop();
  return e;
}

const VerifyQueueEntry& VerifyQueue::top() const {
  if (heap_.empty()) throw ContractViolation("top of an empty verification queue");
  return heap_.top();
}

// ---- scheduler / labellers ------------------------------------------------------

bool scheduler_decides(double delta, std::span<const double> adversary, std::span<const ModelParams> ensemble,
                       const SchedulerConfig& cfg) {
  if (delta > cfg.d) return true;
  if (ensemble.empty()) return false;
  const int first = predict(ensemble[0], adversary);
  for (std::size_t i = 1; i < ensemble.size(); ++i) {
    if (predict(ensemble[i], adversary) != first) return false;
  }
  return true;
}

std::vector<LabelOutcome> OracleLabeler::label(const std::vector<LabelRequest>& requests) {
  std::vector<LabelOutcome> out;
  out.reserve(requests.size());
  for (const auto& r : requests) out.push_back({LabelOutcomeKind::kLabeled, truth_(r)});
  return out;
}

OracleLabeler::Truth OracleLabeler::root_label() {
  return [](const LabelRequest& r) { return r.root.y; };
}

std::vector<LabelOutcome> AssumeLabeler::label(const std::vector<LabelRequest>& requests) {
  return std::vector<LabelOutcome>(requests.size(), LabelOutcome{LabelOutcomeKind::kDeclined, -1});
}

std::vector<LabelOutcome> ServiceLabeler::label(const std::vector<LabelRequest>& requests) {
  std::vector<std::uint64_t> ids;
  ids.reserve(requests.size());
  for (const auto& r : requests) ids.push_back(queue_.enqueue(r));
  return queue_.wait(ids, timeout_);
}

// ---- training ------------------------------------------------------------------

void TrainConfig::validate() const {
  if (dims.size() < 2) throw ContractViolation("network needs an input and an output width");
  for (auto d : dims) {
    if (d == 0) throw ContractViolation("layer widths must be positive");
  }
  if (robust_epsilon >= 0.0 && domain.dim() != dims.front()) {
    throw ContractViolation("robust training needs an input domain matching the input width");
  }
  if (!(adam.learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
}

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  params_ = init_params(cfg_.dims, rng_);
  adam_ = AdamState(params_, cfg_.adam);
}

void Trainer::epoch(std::span<const Sample* const> data) {
  if (data.empty()) throw ContractViolation("training on an empty dataset");
  auto step = [&](std::span<const Sample* const> batch) {
    const Gradient g = cfg_.robust_epsilon >= 0.0 ? robust_backward(params_, batch, cfg_.robust_epsilon, cfg_.domain)
                                                  : backward(params_, batch);
    adam_step(params_, g, adam_);
  };
  if (cfg_.batch_size == 0 || cfg_.batch_size >= data.size()) {
    step(data);
  } else {
    order_.assign(data.begin(), data.end());
    rng_.shuffle(order_);
    for (std::size_t start = 0; start < order_.size(); start += cfg_.batch_size) {
      const std::size_t len = std::min(cfg_.batch_size, order_.size() - start);
      step(std::span<const Sample* const>(order_.data() + start, len));
    }
  }
  ++epochs_done_;
}

ModelParams train_regular(std::span<const Sample> data, const TrainConfig& cfg) {
  Trainer t(cfg);
  std::vector<const Sample*> ptrs;
  ptrs.reserve(data.size());
  for (const auto& s : data) ptrs.push_back(&s);
  for (std::size_t e = 0; e < cfg.epochs; ++e) t.epoch(ptrs);
  return t.params();
}

double training_loss(const ModelParams& params, std::span<const Sample> data) {
  if (data.empty()) return 0.0;
  return mean_loss(params, data);
}

// ---- reports ---------------------------------------------------------------------

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

nlohmann::json round_metrics(const RoundRecord& r) {
  return {{"epoch", r.epoch},
          {"popped", r.popped},
          {"found", r.found},
          {"robust", r.robust},
          {"misclassified", r.misclassified},
          {"timeouts", r.timeouts},
          {"human_labeled", r.human_labeled},
          {"declined", r.declined},
          {"assumed", r.assumed},
          {"true_adversaries", r.true_adversaries},
          {"true_adversary_fraction", optional_json(r.true_adversary_fraction)},
          {"d0_size", r.d0_size},
          {"d_adv_size", r.d_adv_size},
          {"queue_size", r.queue_size}};
}

}  // namespace

nlohmann::json RunReport::metrics_json() const {
  nlohmann::json rounds_json = nlohmann::json::array();
  for (const auto& r : rounds) rounds_json.push_back(round_metrics(r));
  return {{"method", method},
          {"epochs", epochs},
          {"d0_initial", d0_initial},
          {"d0_final", d0_final},
          {"d_adv_final", d_adv_final},
          {"final_train_loss", final_train_loss},
          {"rounds", std::move(rounds_json)}};
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json doc = metrics_json();
  nlohmann::json per_round = nlohmann::json::array();
  for (const auto& r : rounds) {
    per_round.push_back({{"epoch", r.epoch},
                         {"verify_seconds", r.verify_seconds},
                         {"label_seconds", r.label_seconds},
                         {"ensemble_seconds", r.ensemble_seconds}});
  }
  doc["timing"] = {{"update_seconds", update_seconds},
                   {"verify_seconds", verify_seconds},
                   {"label_seconds", label_seconds},
                   {"rounds", std::move(per_round)}};
  return doc;
}

// ---- engine -------------------------------------------------------------------------

void IadaConfig::validate() const {
  train.validate();
  if (!(epsilon > 0.0)) throw ContractViolation("epsilon must be positive");
  if (verify_every == 0) throw ContractViolation("r_v must be at least 1");
  if (verify_count == 0) throw ContractViolation("C must be at least 1");
  if (!(scheduler.d > 0.0) || scheduler.d > epsilon) {
    throw ContractViolation("d must lie in (0, epsilon], got " + std::to_string(scheduler.d));
  }
  if (scheduler.ensemble_enabled && scheduler.ensemble_size == 0) {
    throw ContractViolation("ensemble_size must be positive");
  }
  if (train.domain.dim() != train.dims.front()) throw ContractViolation("input domain does not match input width");
  if (workers == 0) throw ContractViolation("workers must be at least 1");
}

VerifyFn exact_verifier(const IadaConfig& cfg, QueryLog* log) {
  return [eps = cfg.epsilon, domain = cfg.train.domain, opts = cfg.verifier, workers = cfg.workers, log](
             const ModelParams& params, std::span<const Sample> roots, std::span<const std::uint64_t> ids) {
    return min_adversary_batch(params, roots, ids, eps, domain, opts, workers, log);
  };
}

IadaEngine::IadaEngine(IadaConfig cfg, std::span<const Sample> initial, VerifyFn verify, Labeler& labeler,
                       StatusBoard* status)
    : cfg_((cfg.validate(), std::move(cfg))),
      trainer_(cfg_.train),
      verify_(std::move(verify)),
      labeler_(labeler),
      status_(status) {
  if (initial.empty()) throw ContractViolation("IADA needs initial training data");
  for (const auto& s : initial) {
    const std::uint64_t id = next_id_++;
    d0_.append(StoredSample{id, s, Provenance::kOriginal, 0, id});
    queue_.push(id, 0, std::nullopt);
  }
  report_.method = "iada";
  report_.d0_initial = d0_.size();
  publish(false);
}

void IadaEngine::publish(bool running) {
  if (status_ == nullptr) return;
  StatusSnapshot s;
  s.epoch = trainer_.epochs_done();
  s.round = report_.rounds.size();
  s.d0_size = d0_.size();
  s.d_adv_size = d_adv_.size();
  for (const auto& r : report_.rounds) {
    s.human_labeled += r.human_labeled;
    s.assumed += r.assumed;
    s.found += r.found;
  }
  if (!report_.rounds.empty()) s.true_adversary_fraction = report_.rounds.back().true_adversary_fraction;
  s.running = running;
  status_->publish(s);
}

void IadaEngine::train_ensemble() {
  std::vector<Sample> data;
  data.reserve(d0_.size());
  for (const auto& s : d0_) data.push_back(s.sample);
  ensemble_.clear();
  for (std::size_t m = 0; m < cfg_.scheduler.ensemble_size; ++m) {
    TrainConfig tc = cfg_.train;
    tc.robust_epsilon = -1.0;
    tc.epochs = cfg_.scheduler.ensemble_epochs;
    tc.seed = cfg_.train.seed * 1000003ULL + report_.rounds.size() * 7919ULL + m + 1;
    ensemble_.push_back(train_regular(data, tc));
  }
}

void IadaEngine::run() {
  publish(true);
  while (trainer_.epochs_done() < cfg_.train.epochs) run_epoch();
  report_.epochs = trainer_.epochs_done();
  report_.d0_final = d0_.size();
  report_.d_adv_final = d_adv_.size();
  std::vector<Sample> all;
  for (const auto& s : d0_) all.push_back(s.sample);
  for (const auto& s : d_adv_) all.push_back(s.sample);
  report_.final_train_loss = training_loss(trainer_.params(), all);
  publish(false);
}

void IadaEngine::run_epoch() {
  const std::size_t epoch = trainer_.epochs_done();
  if (epoch % cfg_.verify_every == 0) verification_round();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<const Sample*> data;
  data.reserve(d0_.size() + d_adv_.size());
  for (const auto& s : d0_) data.push_back(&s.sample);
  for (const auto& s : d_adv_) data.push_back(&s.sample);
  trainer_.epoch(data);
  report_.update_seconds += seconds_since(t0);
  if (epoch % 50 == 0) publish(true);
}

RoundRecord IadaEngine::verification_round() {
  RoundRecord rec;
  rec.epoch = trainer_.epochs_done();
  d_adv_.clear();

  if (cfg_.scheduler.ensemble_enabled && cfg_.scheduler.mode == SchedulerMode::kNormal && !fixed_ensemble_) {
    const auto t0 = std::chrono::steady_clock::now();
    train_ensemble();
    rec.ensemble_seconds = seconds_since(t0);
  }

  std::vector<VerifyQueueEntry> popped;
  std::vector<Sample> roots;
  std::vector<std::uint64_t> ids;
  while (!queue_.empty() && popped.size() < cfg_.verify_count) {
    popped.push_back(queue_.pop());
    const StoredSample* s = d0_.find(popped.back().sample_id);
    if (s == nullptr) throw ContractViolation("verification queue references a sample outside D0");
    roots.push_back(s->sample);
    ids.push_back(s->id);
  }
  rec.popped = popped.size();

  const auto tv = std::chrono::steady_clock::now();
  const std::vector<VerifyOutcome> outcomes =
      roots.empty() ? std::vector<VerifyOutcome>{} : verify_(trainer_.params(), roots, ids);
  rec.verify_seconds = seconds_since(tv);
  if (outcomes.size() != roots.size()) throw ContractViolation("verifier returned the wrong number of outcomes");

  struct Push {
    std::uint64_t id;
    int level;
    std::optional<double> delta;
  };
  std::vector<Push> deferred;
  struct Pending {
    std::size_t index;  // into popped
    const AdversaryResult* adversary;
  };
  std::vector<Pending> pending;
  std::vector<LabelRequest> requests;

  auto to_assumed = [&](const VerifyQueueEntry& e, const AdversaryResult& adv) {
    const StoredSample& root = *d0_.find(e.sample_id);
    const std::uint64_t id = next_id_++;
    d_adv_.append(StoredSample{id, Sample{adv.x_prime, root.sample.y}, Provenance::kAssumed, e.level + 1, root.id});
    ++rec.assumed;
  };

  for (std::size_t i = 0; i < popped.size(); ++i) {
    const VerifyQueueEntry& e = popped[i];
    const VerifyOutcome& o = outcomes[i];
    switch (o.status) {
      case VerifyStatus::kRootMisclassified:
        ++rec.misclassified;
        deferred.push_back({e.sample_id, e.level, 0.0});
        continue;
      case VerifyStatus::kRobustWithin:
        ++rec.robust;
        deferred.push_back({e.sample_id, e.level, cfg_.epsilon});
        continue;
      case VerifyStatus::kTimeout:
        ++rec.timeouts;
        if (!o.adversary) {
          deferred.push_back({e.sample_id, e.level, cfg_.epsilon});
          continue;
        }
        break;
      case VerifyStatus::kFound:
        break;
    }
    if (!o.adversary) throw ContractViolation("found outcome without an adversary");
    ++rec.found;
    const AdversaryResult& adv = *o.adversary;
    bool human = false;
    switch (cfg_.scheduler.mode) {
      case SchedulerMode::kAlwaysHuman: human = true; break;
      case SchedulerMode::kNeverHuman: human = false; break;
      case SchedulerMode::kNormal: human = scheduler_decides(adv.delta, adv.x_prime, ensemble_, cfg_.scheduler); break;
    }
    if (human) {
      const StoredSample& root = *d0_.find(e.sample_id);
      LabelRequest req;
      req.adversary = adv.x_prime;
      req.root = root.sample;
      req.delta = adv.delta;
      req.hint = cfg_.hint;
      req.class_count = static_cast<int>(trainer_.params().class_count());
      requests.push_back(std::move(req));
      pending.push_back({i, &adv});
    } else {
      to_assumed(e, adv);
      if (cfg_.requeue_on_assume) deferred.push_back({e.sample_id, e.level, adv.delta});
    }
  }

  if (!requests.empty()) {
    const auto tl = std::chrono::steady_clock::now();
    const std::vector<LabelOutcome> answers = labeler_.label(requests);
    rec.label_seconds = seconds_since(tl);
    if (answers.size() != requests.size()) throw ContractViolation("labeller returned the wrong number of answers");
    for (std::size_t j = 0; j < answers.size(); ++j) {
      const VerifyQueueEntry& e = popped[pending[j].index];
      const AdversaryResult& adv = *pending[j].adversary;
      const StoredSample& root = *d0_.find(e.sample_id);
      const int root_label = root.sample.y;
      const std::uint64_t root_id = root.id;
      if (answers[j].kind == LabelOutcomeKind::kLabeled) {
        const int y = answers[j].label;
        if (y < 0 || static_cast<std::size_t>(y) >= trainer_.params().class_count()) {
          throw ContractViolation("labeller produced an out-of-range class");
        }
        ++rec.human_labeled;
        if (y == root_label) ++rec.true_adversaries;
        const std::uint64_t id = next_id_++;
        d0_.append(StoredSample{id, Sample{adv.x_prime, y}, Provenance::kHumanLabeled, e.level + 1, root_id});
        deferred.push_back({root_id, e.level, adv.delta});
        deferred.push_back({id, e.level + 1, std::nullopt});
      } else {
        ++rec.declined;
        to_assumed(e, adv);
      }
    }
  }
  if (rec.human_labeled > 0) {
    rec.true_adversary_fraction =
        static_cast<double>(rec.true_adversaries) / static_cast<double>(rec.human_labeled);
  }

  for (const auto& p : deferred) queue_.push(p.id, p.level, p.delta);
  rec.d0_size = d0_.size();
  rec.d_adv_size = d_adv_.size();
  rec.queue_size = queue_.size();
  report_.verify_seconds += rec.verify_seconds;
  report_.label_seconds += rec.label_seconds;
  report_.rounds.push_back(rec);
  publish(true);
  return rec;
}

}  // namespace iada
