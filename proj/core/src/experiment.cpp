#include "iada/experiment.hpp"

#include <array>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "iada/checkpoint.hpp"
#include "iada/label_service.hpp"

namespace iada {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::array<E, N>& all, const char* what) {
  for (E e : all) {
    if (to_string(e) == s) return e;
  }
  std::string names;
  for (E e : all) names += (names.empty() ? "" : ", ") + std::string(to_string(e));
  throw ValidationError("unknown " + std::string(what) + " '" + s + "' (expected one of: " + names + ")");
}

constexpr std::array<Task, 3> kTasks = {Task::k2D, Task::kMnist, Task::kTrajectory};
constexpr std::array<Method, 5> kMethods = {Method::kRegular, Method::kRobust, Method::kIada, Method::kRegularDA,
                                            Method::kRobustDA};
constexpr std::array<LabelerMode, 3> kLabelers = {LabelerMode::kOracle, LabelerMode::kHumanService,
                                                  LabelerMode::kAlwaysAssume};
constexpr std::array<SchedulerMode, 3> kSchedulerModes = {SchedulerMode::kNormal, SchedulerMode::kAlwaysHuman,
                                                          SchedulerMode::kNeverHuman};

}  // namespace

std::string_view to_string(SchedulerMode m) {
  switch (m) {
    case SchedulerMode::kNormal: return "normal";
    case SchedulerMode::kAlwaysHuman: return "always-human";
    case SchedulerMode::kNeverHuman: return "never-human";
  }
  return "unknown";
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::k2D: return "2d";
    case Task::kMnist: return "mnist";
    case Task::kTrajectory: return "trajectory";
  }
  return "unknown";
}

Task task_from_string(const std::string& s) { return parse_enum(s, kTasks, "task"); }

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kRegular: return "reg";
    case Method::kRobust: return "robust";
    case Method::kIada: return "iada";
    case Method::kRegularDA: return "reg_da";
    case Method::kRobustDA: return "robust_da";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) { return parse_enum(s, kMethods, "method"); }

std::string_view to_string(LabelerMode m) {
  switch (m) {
    case LabelerMode::kOracle: return "oracle";
    case LabelerMode::kHumanService: return "human-service";
    case LabelerMode::kAlwaysAssume: return "always-assume";
  }
  return "unknown";
}

// ---- config ---------------------------------------------------------------------

ExperimentConfig ExperimentConfig::defaults(Task task) {
  ExperimentConfig c;
  c.task = task;
  switch (task) {
    case Task::k2D:
      c.data_size = 500;
      c.test_size = 10000;
      c.max_epoch = 10000;
      c.batch_size = 0;
      c.epsilon = 0.1;
      c.robust_epsilon = 0.01;
      c.verify_count = 5000;
      c.methods = {Method::kRegular, Method::kRobust, Method::kIada, Method::kRegularDA, Method::kRobustDA};
      c.pb_subset = 200;
      break;
    case Task::kMnist:
      c.data_size = 500;
      c.test_size = kAllSamples;
      c.max_epoch = 1000;
      c.batch_size = 64;
      c.epsilon = 0.1;
      c.robust_epsilon = 0.1;
      c.verify_count = 2000;
      c.methods = {Method::kRegular, Method::kRobust, Method::kIada};
      c.pb_subset = 200;
      break;
    case Task::kTrajectory:
      c.data_size = 1000;
      c.test_size = 1000;
      c.max_epoch = 1000;
      c.batch_size = 64;
      c.epsilon = 0.05;
      c.robust_epsilon = 0.05;
      c.verify_count = 5000;
      c.ensemble_enabled = true;
      c.methods = {Method::kRegular, Method::kRobust, Method::kIada};
      c.pb_subset = 200;
      break;
  }
  c.d = 0.5 * c.epsilon;
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ValidationError("experiment config must be a JSON object");
  static const std::set<std::string> known = {
      "task",          "data_size",   "test_size",    "test_seed",       "max_epoch",   "batch_size",
      "hidden",        "learning_rate", "epsilon",    "robust_epsilon",  "verify_every", "verify_count",
      "d",             "ensemble",    "scheduler_mode", "requeue_on_assume", "seed",    "labeler",
      "methods",       "output_dir",  "workers",      "node_budget",     "pb_subset",   "da_samples",
      "mnist_dir",     "service"};
  for (const auto& [key, value] : doc.items()) {
    if (known.count(key) == 0) throw ValidationError("unknown config field '" + key + "'");
  }
  if (!doc.contains("task")) throw ValidationError("config field 'task' is required");
  if (!doc.contains("d")) throw ValidationError("config field 'd' (scheduler distance threshold) is required");

  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? (base_dir / path).lexically_normal() : path;
  };

  try {
    ExperimentConfig c = defaults(task_from_string(doc.at("task").get<std::string>()));
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("data_size", c.data_size);
    if (doc.contains("test_size")) {
      const auto& t = doc.at("test_size");
      c.test_size = t.is_string() && t.get<std::string>() == "all" ? kAllSamples : t.get<std::size_t>();
    }
    get("test_seed", c.test_seed);
    get("max_epoch", c.max_epoch);
    get("batch_size", c.batch_size);
    get("hidden", c.hidden);
    get("learning_rate", c.learning_rate);
    get("epsilon", c.epsilon);
    get("robust_epsilon", c.robust_epsilon);
    get("verify_every", c.verify_every);
    get("verify_count", c.verify_count);
    c.d = doc.at("d").get<double>();
    if (doc.contains("ensemble")) {
      const auto& e = doc.at("ensemble");
      if (e.contains("enabled")) c.ensemble_enabled = e.at("enabled").get<bool>();
      if (e.contains("size")) c.ensemble_size = e.at("size").get<std::size_t>();
      if (e.contains("epochs")) c.ensemble_epochs = e.at("epochs").get<std::size_t>();
    }
    if (doc.contains("scheduler_mode")) {
      c.scheduler_mode = parse_enum(doc.at("scheduler_mode").get<std::string>(), kSchedulerModes, "scheduler mode");
    }
    get("requeue_on_assume", c.requeue_on_assume);
    get("seed", c.seed);
    if (doc.contains("labeler")) c.labeler = parse_enum(doc.at("labeler").get<std::string>(), kLabelers, "labeler");
    if (doc.contains("methods")) {
      c.methods.clear();
      for (const auto& m : doc.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
    }
    if (doc.contains("output_dir")) c.output_dir = resolve(doc.at("output_dir").get<std::string>());
    get("workers", c.workers);
    get("node_budget", c.node_budget);
    get("pb_subset", c.pb_subset);
    get("da_samples", c.da_samples);
    if (doc.contains("mnist_dir")) c.mnist_dir = resolve(doc.at("mnist_dir").get<std::string>());
    if (doc.contains("service")) {
      const auto& s = doc.at("service");
      if (s.contains("host")) c.service_host = s.at("host").get<std::string>();
      if (s.contains("port")) c.service_port = s.at("port").get<int>();
      if (s.contains("label_timeout_seconds")) c.label_timeout_seconds = s.at("label_timeout_seconds").get<double>();
      if (s.contains("ui_dir")) c.ui_dir = resolve(s.at("ui_dir").get<std::string>());
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json methods_json = nlohmann::json::array();
  for (Method m : methods) methods_json.push_back(std::string(to_string(m)));
  return {{"task", std::string(to_string(task))},
          {"data_size", data_size},
          {"test_size", test_size == kAllSamples ? nlohmann::json("all") : nlohmann::json(test_size)},
          {"test_seed", test_seed},
          {"max_epoch", max_epoch},
          {"batch_size", batch_size},
          {"hidden", hidden},
          {"learning_rate", learning_rate},
          {"epsilon", epsilon},
          {"robust_epsilon", robust_epsilon},
          {"verify_every", verify_every},
          {"verify_count", verify_count},
          {"d", d ? nlohmann::json(*d) : nlohmann::json()},
          {"ensemble", {{"enabled", ensemble_enabled}, {"size", ensemble_size}, {"epochs", ensemble_epochs}}},
          {"scheduler_mode", std::string(to_string(scheduler_mode))},
          {"requeue_on_assume", requeue_on_assume},
          {"seed", seed},
          {"labeler", std::string(to_string(labeler))},
          {"methods", std::move(methods_json)},
          {"output_dir", output_dir.string()},
          {"workers", workers},
          {"node_budget", node_budget},
          {"pb_subset", pb_subset},
          {"da_samples", da_samples},
          {"mnist_dir", mnist_dir.string()},
          {"service",
           {{"host", service_host},
            {"port", service_port},
            {"label_timeout_seconds", label_timeout_seconds},
            {"ui_dir", ui_dir.string()}}}};
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ValidationError("at least one method is required");
  if (data_size == 0) throw ValidationError("data_size must be positive");
  if (test_size == 0) throw ValidationError("test_size must be positive");
  if (hidden.empty()) throw ValidationError("at least one hidden layer is required");
  for (auto h : hidden) {
    if (h == 0) throw ValidationError("hidden widths must be positive");
  }
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  if (!(robust_epsilon >= 0.0)) throw ValidationError("robust_epsilon must be non-negative");
  if (verify_every == 0) throw ValidationError("verify_every (r_v) must be at least 1");
  if (verify_count == 0) throw ValidationError("verify_count (C) must be at least 1");
  if (!d) throw ValidationError("d is required");
  if (!(*d > 0.0) || *d > epsilon) throw ValidationError("d must lie in (0, epsilon]");
  if (ensemble_enabled && ensemble_size == 0) throw ValidationError("ensemble size must be positive");
  if (workers == 0) throw ValidationError("workers must be at least 1");
  if (node_budget == 0) throw ValidationError("node_budget must be at least 1");
  if (service_port < 0 || service_port > 65535) throw ValidationError("service port out of range");
  if (!(label_timeout_seconds > 0.0)) throw ValidationError("label timeout must be positive");
  std::set<Method> seen;
  for (Method m : methods) {
    if (!seen.insert(m).second) throw ValidationError("method listed twice: " + std::string(to_string(m)));
    if (m == Method::kRegularDA || m == Method::kRobustDA) {
      if (task != Task::k2D) throw ValidationError("uniform augmentation methods need the 2D ground truth");
      if (da_samples == 0 && seen.count(Method::kIada) == 0) {
        throw ValidationError("uniform augmentation needs da_samples or iada earlier in the method list");
      }
    }
  }
}

TrainConfig ExperimentConfig::train_config(const InputBox& domain, std::size_t input_dim, std::size_t classes) const {
  TrainConfig t;
  t.dims.push_back(input_dim);
  t.dims.insert(t.dims.end(), hidden.begin(), hidden.end());
  t.dims.push_back(classes);
  t.epochs = max_epoch;
  t.batch_size = batch_size;
  t.adam.learning_rate = learning_rate;
  t.seed = seed;
  t.domain = domain;
  return t;
}

IadaConfig ExperimentConfig::iada_config(const InputBox& domain, std::size_t input_dim, std::size_t classes) const {
  IadaConfig c;
  c.train = train_config(domain, input_dim, classes);
  c.epsilon = epsilon;
  c.verify_every = verify_every;
  c.verify_count = verify_count;
  c.scheduler.d = d.value_or(0.5 * epsilon);
  c.scheduler.ensemble_enabled = ensemble_enabled;
  c.scheduler.ensemble_size = ensemble_size;
  c.scheduler.ensemble_epochs = ensemble_epochs;
  c.scheduler.mode = scheduler_mode;
  c.requeue_on_assume = requeue_on_assume;
  c.workers = workers;
  c.verifier.node_budget = node_budget;
  return c;
}

// ---- data ---------------------------------------------------------------------------

TaskData load_task(const ExperimentConfig& cfg) {
  TaskData d;
  switch (cfg.task) {
    case Task::k2D: {
      const Ground2D truth = Ground2D::standard();
      Rng train_rng(cfg.seed);
      Rng test_rng(cfg.test_seed);
      d.train = truth.sample(cfg.data_size, train_rng);
      d.test = truth.sample(cfg.test_size == kAllSamples ? 10000 : cfg.test_size, test_rng);
      d.domain = Ground2D::box();
      d.classes = 2;
      d.hint = RenderHint::kPoint2D;
      d.truth = [](const LabelRequest& r) { return ground2d_label(r.adversary); };
      break;
    }
    case Task::kMnist: {
      const auto dir = cfg.mnist_dir;
      d.train = load_mnist(dir / "train-images-idx3-ubyte.gz", dir / "train-labels-idx1-ubyte.gz", cfg.data_size,
                           cfg.seed)
                    .samples;
      d.test = load_mnist(dir / "t10k-images-idx3-ubyte.gz", dir / "t10k-labels-idx1-ubyte.gz", cfg.test_size,
                          cfg.test_seed)
                   .samples;
      d.domain = MnistSet::box();
      d.classes = 10;
      d.hint = RenderHint::kDigitImage;
      d.truth = OracleLabeler::root_label();
      break;
    }
    case Task::kTrajectory: {
      d.train = to_samples(gen_trajectories(cfg.data_size, cfg.seed));
      d.test = to_samples(gen_trajectories(cfg.test_size == kAllSamples ? 1000 : cfg.test_size,
                                           cfg.test_seed + 0x7e57));
      d.domain = trajectory_box();
      d.classes = kIntentionCount;
      d.hint = RenderHint::kTrajectory;
      d.truth = OracleLabeler::root_label();
      break;
    }
  }
  if (d.train.empty()) throw ValidationError("training set is empty");
  return d;
}

// ---- metrics ------------------------------------------------------------------------

double accuracy(const ModelParams& params, std::span<const Sample> testset) {
  if (testset.empty()) throw ContractViolation("accuracy of an empty test set");
  std::size_t correct = 0;
  for (const auto& s : testset) correct += predict(params, s.x) == s.y;
  return static_cast<double>(correct) / static_cast<double>(testset.size());
}

std::vector<std::vector<int>> export_boundary_raster(const ModelParams& params, std::size_t resolution) {
  if (params.input_dim() != 2) throw ContractViolation("boundary rasters need a 2-input model");
  if (resolution == 0) throw ContractViolation("raster resolution must be positive");
  std::vector<std::vector<int>> grid(resolution, std::vector<int>(resolution));
  const double n = static_cast<double>(resolution);
  for (std::size_t i = 0; i < resolution; ++i) {
    for (std::size_t j = 0; j < resolution; ++j) {
      const double x[2] = {(static_cast<double>(j) + 0.5) / n, (static_cast<double>(i) + 0.5) / n};
      grid[i][j] = predict(params, x);
    }
  }
  return grid;
}

std::string raster_csv(const std::vector<std::vector<int>>& grid) {
  std::ostringstream out;
  for (const auto& row : grid) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
    out << '\n';
  }
  return out.str();
}

// ---- reports ------------------------------------------------------------------------

namespace {

nlohmann::json method_metrics(const MethodResult& r) {
  nlohmann::json m = {{"method", std::string(to_string(r.method))},
                      {"accuracy", r.accuracy},
                      {"train_size", r.train_size},
                      {"run", r.run.metrics_json()}};
  if (r.perturbation) {
    const auto& p = *r.perturbation;
    m["p_b"] = p.p_b;
    m["p_b_detail"] = {{"evaluated", p.evaluated},
                       {"misclassified", p.misclassified},
                       {"found", p.found},
                       {"robust", p.robust},
                       {"timeouts", p.timeouts}};
  } else {
    m["p_b"] = nullptr;
  }
  return m;
}

}  // namespace

nlohmann::json EvalReport::metrics_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : methods) list.push_back(method_metrics(r));
  return {{"task", std::string(to_string(config.task))}, {"seed", config.seed}, {"methods", std::move(list)}};
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : methods) {
    nlohmann::json m = method_metrics(r);
    m["run"] = r.run.to_json();
    m["timing"] = {{"train_seconds", r.train_seconds}, {"pb_seconds", r.pb_seconds}};
    list.push_back(std::move(m));
  }
  return {{"format", "iada-eval-report"},
          {"version", 1},
          {"task", std::string(to_string(config.task))},
          {"seed", config.seed},
          {"complete", complete},
          {"error", error.empty() ? nlohmann::json() : nlohmann::json(error)},
          {"config", config.to_json()},
          {"methods", std::move(list)}};
}

std::string EvalReport::csv_summary() const {
  std::ostringstream out;
  out << "task,seed,method,data_size,epochs,accuracy,p_b,d0_final,d_adv_final,train_seconds,pb_seconds\n";
  for (const auto& r : methods) {
    out << to_string(config.task) << ',' << config.seed << ',' << to_string(r.method) << ',' << config.data_size << ','
        << config.max_epoch << ',' << r.accuracy << ',';
    if (r.perturbation) out << r.perturbation->p_b;
    out << ',' << r.run.d0_final << ',' << r.run.d_adv_final << ',' << r.train_seconds << ',' << r.pb_seconds << '\n';
  }
  return out.str();
}

const MethodResult* EvalReport::find(Method m) const {
  for (const auto& r : methods) {
    if (r.method == m) return &r;
  }
  return nullptr;
}

// ---- runner -------------------------------------------------------------------------

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct MethodRun {
  ModelParams params;
  RunReport run;
};

MethodRun train_plain(const ExperimentConfig& cfg, const TaskData& data, std::span<const Sample> train, bool robust,
                      const char* name) {
  TrainConfig tc = cfg.train_config(data.domain, data.train.front().x.size(), data.classes);
  if (robust) tc.robust_epsilon = cfg.robust_epsilon;
  MethodRun r;
  const auto t0 = std::chrono::steady_clock::now();
  r.params = train_regular(train, tc);
  r.run.update_seconds = seconds_since(t0);
  r.run.method = name;
  r.run.epochs = cfg.max_epoch;
  r.run.d0_initial = data.train.size();
  r.run.d0_final = train.size();
  r.run.final_train_loss = training_loss(r.params, train);
  return r;
}

MethodRun train_iada(const ExperimentConfig& cfg, const TaskData& data) {
  IadaConfig ic = cfg.iada_config(data.domain, data.train.front().x.size(), data.classes);
  ic.hint = data.hint;
  std::unique_ptr<QueryLog> log;
  if (!cfg.output_dir.empty()) log = std::make_unique<QueryLog>(cfg.output_dir / "verifier_queries.jsonl");

  LabelQueue queue;
  StatusBoard status;
  std::unique_ptr<Labeler> labeler;
  std::unique_ptr<LabelService> service;
  switch (cfg.labeler) {
    case LabelerMode::kOracle: labeler = std::make_unique<OracleLabeler>(data.truth); break;
    case LabelerMode::kAlwaysAssume: labeler = std::make_unique<AssumeLabeler>(); break;
    case LabelerMode::kHumanService: {
      const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg.label_timeout_seconds * 1000.0));
      labeler = std::make_unique<ServiceLabeler>(queue, timeout);
      service = std::make_unique<LabelService>(queue, status,
                                               ServiceOptions{cfg.service_host, cfg.service_port, cfg.ui_dir});
      service->start();
      break;
    }
  }
  IadaEngine engine(ic, data.train, exact_verifier(ic, log.get()), *labeler, &status);
  engine.run();
  return {engine.params(), engine.report()};
}

std::vector<Sample> uniform_augmentation(const ExperimentConfig& cfg, const TaskData& data, std::size_t count) {
  std::vector<Sample> out = data.train;
  Rng rng(cfg.seed ^ 0xDA7A5EEDULL);
  const Ground2D truth = Ground2D::standard();
  auto extra = truth.sample(count, rng);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

}  // namespace

EvalReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  EvalReport report;
  report.config = cfg;
  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);

  auto flush = [&] {
    if (cfg.output_dir.empty()) return;
    write_text(cfg.output_dir / "report.json", report.to_json().dump(2) + "\n");
    write_text(cfg.output_dir / "summary.csv", report.csv_summary());
  };

  try {
    const TaskData data = load_task(cfg);
    std::vector<Sample> pb_set;
    if (cfg.pb_subset > 0) {
      std::vector<int> labels;
      for (const auto& s : data.test) labels.push_back(s.y);
      for (std::size_t i : stratified_subset(labels, cfg.pb_subset, cfg.test_seed)) pb_set.push_back(data.test[i]);
    }
    std::size_t iada_augmented = 0;
    for (Method m : cfg.methods) {
      MethodResult res;
      res.method = m;
      const auto t0 = std::chrono::steady_clock::now();
      MethodRun run;
      switch (m) {
        case Method::kRegular: run = train_plain(cfg, data, data.train, false, "reg"); break;
        case Method::kRobust: run = train_plain(cfg, data, data.train, true, "robust"); break;
        case Method::kIada:
          run = train_iada(cfg, data);
          iada_augmented = run.run.d0_final - run.run.d0_initial + run.run.d_adv_final;
          break;
        case Method::kRegularDA:
        case Method::kRobustDA: {
          const std::size_t count = cfg.da_samples > 0 ? cfg.da_samples : iada_augmented;
          const auto augmented = uniform_augmentation(cfg, data, count);
          run = train_plain(cfg, data, augmented, m == Method::kRobustDA, m == Method::kRobustDA ? "robust_da" : "reg_da");
          break;
        }
      }
      res.train_seconds = seconds_since(t0);
      res.params = std::move(run.params);
      res.run = std::move(run.run);
      res.train_size = res.run.d0_final + res.run.d_adv_final;
      res.accuracy = accuracy(res.params, data.test);
      if (!pb_set.empty()) {
        const auto tp = std::chrono::steady_clock::now();
        VerifierOptions vo;
        vo.node_budget = cfg.node_budget;
        res.perturbation = average_perturbation_bound(res.params, pb_set, cfg.epsilon, data.domain, vo, cfg.workers);
        res.pb_seconds = seconds_since(tp);
      }
      if (!cfg.output_dir.empty()) {
        const std::string name(to_string(m));
        save_checkpoint(cfg.output_dir / (name + ".model.json"), res.params, cfg.to_json());
        write_text(cfg.output_dir / (name + ".run.json"), res.run.to_json().dump(2) + "\n");
      }
      report.methods.push_back(std::move(res));
      flush();
    }
    report.complete = true;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    report.complete = false;
    report.error = e.what();
  }
  flush();
  return report;
}

}  // namespace iada
