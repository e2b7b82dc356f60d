// iada: run experiments, verify single points, export 2D decision rasters.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "iada/checkpoint.hpp"
#include "iada/experiment.hpp"
#include "iada/verifier.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw iada::ValidationError("cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw iada::ValidationError(path + " is not valid JSON");
  return doc;
}

struct RunArgs {
  std::string config;
  std::string task, method, output, labeler, mnist_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, data_size, test_size, verify_every, verify_count, pb_subset, workers;
  std::optional<double> epsilon, d;
};

int cmd_run(const RunArgs& a) {
  nlohmann::json doc = read_json(a.config);
  if (!doc.is_object()) throw iada::ValidationError("config must be a JSON object");
  // Overrides are applied to the document so that validation sees one config.
  if (!a.task.empty()) doc["task"] = a.task;
  if (!a.method.empty()) {
    nlohmann::json list = nlohmann::json::array();
    std::stringstream ss(a.method);
    for (std::string m; std::getline(ss, m, ',');) list.push_back(m);
    doc["methods"] = list;
  }
  if (!a.output.empty()) doc["output_dir"] = std::filesystem::absolute(a.output).string();
  if (!a.labeler.empty()) doc["labeler"] = a.labeler;
  if (!a.mnist_dir.empty()) doc["mnist_dir"] = std::filesystem::absolute(a.mnist_dir).string();
  if (a.seed) doc["seed"] = *a.seed;
  if (a.epochs) doc["max_epoch"] = *a.epochs;
  if (a.data_size) doc["data_size"] = *a.data_size;
  if (a.test_size) doc["test_size"] = *a.test_size;
  if (a.verify_every) doc["verify_every"] = *a.verify_every;
  if (a.verify_count) doc["verify_count"] = *a.verify_count;
  if (a.pb_subset) doc["pb_subset"] = *a.pb_subset;
  if (a.workers) doc["workers"] = *a.workers;
  if (a.epsilon) doc["epsilon"] = *a.epsilon;
  if (a.d) doc["d"] = *a.d;

  const auto cfg = iada::ExperimentConfig::from_json(doc, std::filesystem::path(a.config).parent_path());
  const auto report = iada::run_experiment(cfg);
  std::cout << report.csv_summary();
  if (!report.complete) {
    std::cerr << "experiment incomplete: " << report.error << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_verify(const std::string& model, const std::string& input) {
  const auto ckpt = iada::load_checkpoint(model);
  const nlohmann::json doc = read_json(input);
  try {
    iada::Sample root{doc.at("x").get<std::vector<double>>(), doc.at("label").get<int>()};
    const double eps = doc.at("epsilon").get<double>();
    iada::InputBox domain = iada::InputBox::uniform(root.x.size(), 0.0, 1.0);
    if (doc.contains("domain")) {
      domain.lower = doc["domain"].at("lower").get<std::vector<double>>();
      domain.upper = doc["domain"].at("upper").get<std::vector<double>>();
    }
    iada::VerifierOptions opts;
    if (doc.contains("node_budget")) opts.node_budget = doc["node_budget"].get<std::size_t>();
    const auto out = iada::min_adversary(ckpt.params, root, 0, eps, domain, opts);
    nlohmann::json res = {{"status", std::string(iada::to_string(out.status))},
                          {"epsilon", out.epsilon},
                          {"nodes", out.nodes},
                          {"seconds", out.seconds}};
    if (out.adversary) {
      res["delta"] = out.adversary->delta;
      res["target_class"] = out.adversary->target_class;
      res["x_prime"] = out.adversary->x_prime;
    } else {
      res["delta"] = nullptr;
    }
    std::cout << res.dump(2) << "\n";
  } catch (const nlohmann::json::exception& e) {
    throw iada::ValidationError(std::string("bad verify input: ") + e.what());
  } catch (const iada::ContractViolation& e) {
    throw iada::ValidationError(e.what());
  }
  return kExitOk;
}

int cmd_raster(const std::string& model, std::size_t resolution, const std::string& output) {
  const auto ckpt = iada::load_checkpoint(model);
  if (ckpt.params.input_dim() != 2) throw iada::ValidationError("export-raster needs a 2-input model");
  if (resolution == 0) throw iada::ValidationError("resolution must be positive");
  const std::string csv = iada::raster_csv(iada::export_boundary_raster(ckpt.params, resolution));
  if (output.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write " + output);
    out << csv;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative adversarial data augmentation with an exact verifier"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Train and evaluate the configured methods");
  run_cmd->add_option("--config", run.config, "Experiment JSON")->required();
  run_cmd->add_option("--task", run.task, "2d | mnist | trajectory");
  run_cmd->add_option("--method", run.method, "Comma list of reg,robust,iada,reg_da,robust_da");
  run_cmd->add_option("--seed", run.seed);
  run_cmd->add_option("--epochs", run.epochs);
  run_cmd->add_option("--data-size", run.data_size);
  run_cmd->add_option("--test-size", run.test_size);
  run_cmd->add_option("--epsilon", run.epsilon);
  run_cmd->add_option("--d", run.d);
  run_cmd->add_option("--verify-every", run.verify_every);
  run_cmd->add_option("--verify-count", run.verify_count);
  run_cmd->add_option("--pb-subset", run.pb_subset);
  run_cmd->add_option("--workers", run.workers);
  run_cmd->add_option("--labeler", run.labeler, "oracle | human-service | always-assume");
  run_cmd->add_option("--mnist-dir", run.mnist_dir);
  run_cmd->add_option("--output", run.output, "Output directory");

  std::string model, input, output;
  std::size_t resolution = 200;
  auto* verify_cmd = app.add_subcommand("verify-one", "Minimal adversarial perturbation of one input");
  verify_cmd->add_option("--model", model, "Checkpoint JSON")->required();
  verify_cmd->add_option("--input", input, "{\"x\": [...], \"label\": y, \"epsilon\": e}")->required();
  auto* raster_cmd = app.add_subcommand("export-raster", "Predicted classes on a grid over [0,1]^2");
  raster_cmd->add_option("--model", model, "Checkpoint JSON")->required();
  raster_cmd->add_option("--resolution", resolution);
  raster_cmd->add_option("--output", output, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*verify_cmd) return cmd_verify(model, input);
    if (*raster_cmd) return cmd_raster(model, resolution, output);
  } catch (const iada::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
