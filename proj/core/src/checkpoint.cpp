#include "iada/checkpoint.hpp"

#include <fstream>

namespace iada {

nlohmann::json params_to_json(const ModelParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : params.layers) {
    layers.push_back({{"rows", layer.weight.rows},
                      {"cols", layer.weight.cols},
                      {"weight", layer.weight.data},
                      {"bias", layer.bias}});
  }
  return {{"dims", params.dims()}, {"layers", std::move(layers)}};
}

ModelParams params_from_json(const nlohmann::json& doc) {
  ModelParams params;
  try {
    for (const auto& l : doc.at("layers")) {
      DenseLayer layer;
      layer.weight.rows = l.at("rows").get<std::size_t>();
      layer.weight.cols = l.at("cols").get<std::size_t>();
      layer.weight.data = l.at("weight").get<std::vector<double>>();
      layer.bias = l.at("bias").get<std::vector<double>>();
      params.layers.push_back(std::move(layer));
    }
    if (doc.contains("dims") && doc.at("dims").get<std::vector<std::size_t>>() != params.dims()) {
      throw FormatError("checkpoint dims do not match its layers");
    }
    params.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model document: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("bad model document: ") + e.what());
  }
  return params;
}

nlohmann::json checkpoint_to_json(const ModelParams& params, const nlohmann::json& config) {
  nlohmann::json doc = params_to_json(params);
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["config"] = config;
  return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat) {
    throw FormatError("not an iada checkpoint");
  }
  if (doc.value("version", 0) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version");
  }
  Checkpoint ck;
  ck.params = params_from_json(doc);
  if (doc.contains("config")) ck.config = doc.at("config");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const nlohmann::json& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << checkpoint_to_json(params, config).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace iada
