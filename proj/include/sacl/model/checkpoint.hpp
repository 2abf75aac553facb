#pragma once

#include <filesystem>

#include "json.hpp"
#include "sacl/model/model.hpp"

namespace sacl {

struct Checkpoint {
    ModelConfig config;
    ParamMap params;
};

// JSON container: {"format": "sacl-checkpoint", "version": 1, "config": {...},
// "tensors": {name: {"shape": [...], "data": [...]}}}. Doubles are written with
// round-trip precision, so save/load is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& c);
// Unknown keys are rejected; missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace sacl
