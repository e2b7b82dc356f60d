#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iada/datasets.hpp"
#include "iada/engine.hpp"
#include "iada/verifier.hpp"

namespace iada {

// Bad configuration or arguments; the CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task : std::uint8_t { k2D, kMnist, kTrajectory };
std::string_view to_string(Task t);
Task task_from_string(const std::string& s);

enum class Method : std::uint8_t { kRegular, kRobust, kIada, kRegularDA, kRobustDA };
std::string_view to_string(Method m);
Method method_from_string(const std::string& s);

enum class LabelerMode : std::uint8_t { kOracle, kHumanService, kAlwaysAssume };
std::string_view to_string(LabelerMode m);
std::string_view to_string(SchedulerMode m);

struct ExperimentConfig {
  Task task = Task::k2D;
  std::size_t data_size = 500;
  std::size_t test_size = 10000;  // kAllSamples for the whole MNIST test file
  std::uint64_t test_seed = 7;
  std::size_t max_epoch = 10000;
  std::size_t batch_size = 0;  // 0 = full batch
  std::vector<std::size_t> hidden = {32};
  double learning_rate = 0.01;
  double epsilon = 0.1;
  double robust_epsilon = 0.01;
  std::size_t verify_every = 500;
  std::size_t verify_count = 5000;
  std::optional<double> d;  // required when read from a file
  bool ensemble_enabled = false;
  std::size_t ensemble_size = 3;
  std::size_t ensemble_epochs = 200;
  SchedulerMode scheduler_mode = SchedulerMode::kNormal;
  bool requeue_on_assume = false;
  std::uint64_t seed = 1;
  LabelerMode labeler = LabelerMode::kOracle;
  std::vector<Method> methods = {Method::kRegular, Method::kIada};
  std::filesystem::path output_dir;
  std::size_t workers = 1;
  std::size_t node_budget = 50000;
  // p_b on a stratified test subset of this size (0 = skip p_b).
  std::size_t pb_subset = 0;
  // Uniform augmentation count for the *_da methods; 0 = match IADA's count.
  std::size_t da_samples = 0;
  std::filesystem::path mnist_dir = "data/mnist-sample";
  std::string service_host = "127.0.0.1";
  int service_port = 8643;
  double label_timeout_seconds = 120.0;
  std::filesystem::path ui_dir;

  // Task defaults; d = 0.5 * epsilon.
  static ExperimentConfig defaults(Task task);

  // Starts from defaults(task) and applies the document. Relative paths are
  // resolved against base_dir. Throws ValidationError.
  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;

  void validate() const;
  IadaConfig iada_config(const InputBox& domain, std::size_t input_dim, std::size_t classes) const;
  TrainConfig train_config(const InputBox& domain, std::size_t input_dim, std::size_t classes) const;
};

struct TaskData {
  std::vector<Sample> train;
  std::vector<Sample> test;
  InputBox domain;
  std::size_t classes = 2;
  RenderHint hint = RenderHint::kPoint2D;
  OracleLabeler::Truth truth;  // 2D ground truth, or the root label
};

TaskData load_task(const ExperimentConfig& cfg);

struct MethodResult {
  Method method = Method::kRegular;
  double accuracy = 0.0;
  std::optional<PerturbationReport> perturbation;
  std::size_t train_size = 0;  // samples seen in the final epoch
  RunReport run;
  double train_seconds = 0.0;
  double pb_seconds = 0.0;
  ModelParams params;
};

struct EvalReport {
  ExperimentConfig config;
  std::vector<MethodResult> methods;
  bool complete = false;
  std::string error;

  nlohmann::json to_json() const;
  // Metric values only (no timings), for reproducibility checks.
  nlohmann::json metrics_json() const;
  std::string csv_summary() const;
  const MethodResult* find(Method m) const;
};

double accuracy(const ModelParams& params, std::span<const Sample> testset);

// grid[i][j] = predicted class at ((j + 0.5) / n, (i + 0.5) / n).
std::vector<std::vector<int>> export_boundary_raster(const ModelParams& params, std::size_t resolution);
std::string raster_csv(const std::vector<std::vector<int>>& grid);

// Runs every configured method on identical data and seeds. When output_dir
// is set, writes report.json, summary.csv, per-method run reports and
// checkpoints. A method failure stops the run and leaves a report flagged
// incomplete.
EvalReport run_experiment(const ExperimentConfig& cfg);

}  // namespace iada
