#pragma once

#include <filesystem>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "iada/nn.hpp"

namespace iada {

// Malformed input file (checkpoint, config, IDX, request body).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint document:
//   {"format": "iada-checkpoint", "version": 1,
//    "dims": [in, h1, ..., classes],
//    "layers": [{"rows": r, "cols": c, "weight": [row-major r*c], "bias": [r]}, ...],
//    "config": {...creation config...}}
inline constexpr const char* kCheckpointFormat = "iada-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  nlohmann::json config = nlohmann::json::object();
};

nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& doc);

nlohmann::json checkpoint_to_json(const ModelParams& params, const nlohmann::json& config);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const nlohmann::json& config = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace iada
