#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "iada/input_box.hpp"
#include "iada/label_queue.hpp"
#include "iada/nn.hpp"
#include "iada/random.hpp"
#include "iada/verifier.hpp"

namespace iada {

// ---- labelled stores --------------------------------------------------------

enum class Provenance : std::uint8_t { kOriginal, kHumanLabeled, kAssumed };
std::string_view to_string(Provenance p);

struct StoredSample {
  std::uint64_t id = 0;
  Sample sample;
  Provenance provenance = Provenance::kOriginal;
  int level = 0;               // 0 for original data, parent + 1 for adversaries
  std::uint64_t parent_id = 0;  // root the adversary came from; own id for originals
};

// D0 holds original and human-labelled samples; D_adv holds assumed-label
// adversaries and is the only store that can be cleared.
class LabeledSet {
 public:
  enum class Kind : std::uint8_t { kTrusted, kAssumed };
  explicit LabeledSet(Kind kind) : kind_(kind) {}

  const StoredSample& append(StoredSample s);
  void clear();

  Kind kind() const { return kind_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const StoredSample& operator[](std::size_t i) const { return items_[i]; }
  const StoredSample* find(std::uint64_t id) const;
  std::vector<std::uint64_t> ids() const;
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  Kind kind_;
  std::vector<StoredSample> items_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

// ---- Qv -----------------------------------------------------------------------

struct VerifyQueueEntry {
  std::uint64_t sample_id = 0;
  int level = 0;
  std::optional<double> last_delta;  // unknown sorts before any known delta
  std::uint64_t seq = 0;
};

// Pops by (level, last_delta, insertion order), all ascending.
class VerifyQueue {
 public:
  void push(std::uint64_t sample_id, int level, std::optional<double> last_delta);
  VerifyQueueEntry pop();
  const VerifyQueueEntry& top() const;
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

  static bool before(const VerifyQueueEntry& a, const VerifyQueueEntry& b);

 private:
  struct Later {
    bool operator()(const VerifyQueueEntry& a, const VerifyQueueEntry& b) const { return before(b, a); }
  };
  std::priority_queue<VerifyQueueEntry, std::vector<VerifyQueueEntry>, Later> heap_;
  std::uint64_t seq_ = 0;
};

// ---- scheduler ---------------------------------------------------------------

enum class SchedulerMode : std::uint8_t { kNormal, kAlwaysHuman, kNeverHuman };

struct SchedulerConfig {
  double d = 0.05;  // distance threshold, same units as delta
  bool ensemble_enabled = false;
  std::size_t ensemble_size = 3;
  std::size_t ensemble_epochs = 200;
  SchedulerMode mode = SchedulerMode::kNormal;
};

// True when delta > d, or when every ensemble member predicts the same class
// for the adversary. An empty ensemble disables the second clause.
bool scheduler_decides(double delta, std::span<const double> adversary, std::span<const ModelParams> ensemble,
                       const SchedulerConfig& cfg);

// ---- labellers ------------------------------------------------------------------

class Labeler {
 public:
  virtual ~Labeler() = default;
  // One outcome per request, same order.
  virtual std::vector<LabelOutcome> label(const std::vector<LabelRequest>& requests) = 0;
  virtual std::string name() const = 0;
};

// Answers every request from a ground-truth function.
class OracleLabeler : public Labeler {
 public:
  using Truth = std::function<int(const LabelRequest&)>;
  explicit OracleLabeler(Truth truth) : truth_(std::move(truth)) {}
  std::vector<LabelOutcome> label(const std::vector<LabelRequest>& requests) override;
  std::string name() const override { return "oracle"; }

  // Class of the root: the stand-in oracle for tasks without an analytic truth.
  static Truth root_label();

 private:
  Truth truth_;
};

// Declines everything, so every adversary keeps its root's label.
class AssumeLabeler : public Labeler {
 public:
  std::vector<LabelOutcome> label(const std::vector<LabelRequest>& requests) override;
  std::string name() const override { return "always-assume"; }
};

// Posts requests to a LabelQueue and waits for a human through the service.
class ServiceLabeler : public Labeler {
 public:
  ServiceLabeler(LabelQueue& queue, std::chrono::milliseconds timeout) : queue_(queue), timeout_(timeout) {}
  std::vector<LabelOutcome> label(const std::vector<LabelRequest>& requests) override;
  std::string name() const override { return "human-service"; }

 private:
  LabelQueue& queue_;
  std::chrono::milliseconds timeout_;
};

// ---- training ------------------------------------------------------------------

struct TrainConfig {
  std::vector<std::size_t> dims;  // {input, hidden..., classes}
  std::size_t epochs = 1000;
  std::size_t batch_size = 0;  // 0 = full batch
  AdamConfig adam;
  std::uint64_t seed = 1;
  // Robust (interval) loss radius; negative = plain cross-entropy.
  double robust_epsilon = -1.0;
  InputBox domain;

  void validate() const;
};

// Owns the parameters, the optimizer and the data-order stream.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  // One pass over `data` in minibatches (shuffled unless full batch).
  void epoch(std::span<const Sample* const> data);

  const ModelParams& params() const { return params_; }
  std::size_t epochs_done() const { return epochs_done_; }

 private:
  TrainConfig cfg_;
  Rng rng_;
  ModelParams params_;
  AdamState adam_;
  std::size_t epochs_done_ = 0;
  std::vector<const Sample*> order_;
};

ModelParams train_regular(std::span<const Sample> data, const TrainConfig& cfg);

// Mean cross-entropy, for reporting.
double training_loss(const ModelParams& params, std::span<const Sample> data);

// ---- the iterative loop ------------------------------------------------------------

struct RoundRecord {
  std::size_t epoch = 0;
  std::size_t popped = 0;
  std::size_t found = 0;
  std::size_t robust = 0;
  std::size_t misclassified = 0;
  std::size_t timeouts = 0;
  std::size_t human_labeled = 0;
  std::size_t declined = 0;  // declined or timed out by the labeller
  std::size_t assumed = 0;   // sent to D_adv, including declined ones
  std::size_t true_adversaries = 0;  // labelled with the root's class
  std::optional<double> true_adversary_fraction;
  std::size_t d0_size = 0;
  std::size_t d_adv_size = 0;
  std::size_t queue_size = 0;
  double verify_seconds = 0.0;
  double label_seconds = 0.0;
  double ensemble_seconds = 0.0;
};

struct RunReport {
  std::string method;
  std::size_t epochs = 0;
  std::vector<RoundRecord> rounds;
  std::size_t d0_initial = 0;
  std::size_t d0_final = 0;
  std::size_t d_adv_final = 0;
  double final_train_loss = 0.0;
  double update_seconds = 0.0;
  double verify_seconds = 0.0;
  double label_seconds = 0.0;

  // Metric fields only; timings live under "timing".
  nlohmann::json to_json() const;
  // Same document without timings, for reproducibility comparisons.
  nlohmann::json metrics_json() const;
};

struct IadaConfig {
  TrainConfig train;
  double epsilon = 0.1;
  std::size_t verify_every = 500;  // r_v
  std::size_t verify_count = 5000;  // C
  SchedulerConfig scheduler;
  bool requeue_on_assume = false;
  std::size_t workers = 1;
  VerifierOptions verifier;
  RenderHint hint = RenderHint::kPoint2D;

  void validate() const;
};

// Verifies a batch of roots against one snapshot; outcomes in root order.
using VerifyFn = std::function<std::vector<VerifyOutcome>(const ModelParams&, std::span<const Sample>,
                                                          std::span<const std::uint64_t>)>;

VerifyFn exact_verifier(const IadaConfig& cfg, QueryLog* log = nullptr);

// Thread-safe training snapshot for the label service.
struct StatusSnapshot {
  std::size_t epoch = 0;
  std::size_t round = 0;
  std::size_t d0_size = 0;
  std::size_t d_adv_size = 0;
  std::size_t human_labeled = 0;
  std::size_t assumed = 0;
  std::size_t found = 0;
  std::optional<double> true_adversary_fraction;
  bool running = false;
};

class StatusBoard {
 public:
  void publish(const StatusSnapshot& s) {
    std::lock_guard<std::mutex> lock(mu_);
    snap_ = s;
  }
  StatusSnapshot read() const {
    std::lock_guard<std::mutex> lock(mu_);
    return snap_;
  }

 private:
  mutable std::mutex mu_;
  StatusSnapshot snap_;
};

class IadaEngine {
 public:
  IadaEngine(IadaConfig cfg, std::span<const Sample> initial, VerifyFn verify, Labeler& labeler,
             StatusBoard* status = nullptr);

  // Runs all remaining epochs.
  void run();
  // One epoch; a verification round first when epoch % r_v == 0, counting
  // epochs from 0 so every round is followed by r_v epochs of training.
  void run_epoch();
  // Verification round against the current parameters.
  RoundRecord verification_round();

  const ModelParams& params() const { return trainer_.params(); }
  const LabeledSet& d0() const { return d0_; }
  const LabeledSet& d_adv() const { return d_adv_; }
  const VerifyQueue& queue() const { return queue_; }
  const RunReport& report() const { return report_; }
  std::size_t epoch() const { return trainer_.epochs_done(); }
  const IadaConfig& config() const { return cfg_; }

  // Overrides the ensemble used by the scheduler (tests); otherwise it is
  // retrained on D0 each round when enabled.
  void set_ensemble(std::vector<ModelParams> ensemble) {
    fixed_ensemble_ = true;
    ensemble_ = std::move(ensemble);
  }

 private:
  void train_ensemble();
  void publish(bool running);

  IadaConfig cfg_;
  Trainer trainer_;
  VerifyFn verify_;
  Labeler& labeler_;
  StatusBoard* status_;
  LabeledSet d0_{LabeledSet::Kind::kTrusted};
  LabeledSet d_adv_{LabeledSet::Kind::kAssumed};
  VerifyQueue queue_;
  std::uint64_t next_id_ = 0;
  std::vector<ModelParams> ensemble_;
  bool fixed_ensemble_ = false;
  RunReport report_;
};

}  // namespace iada
