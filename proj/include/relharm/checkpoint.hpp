#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "relharm/model.hpp"
#include "relharm/nn/adam.hpp"

namespace relharm {

struct TensorBlob {
    nn::Shape shape;
    std::vector<float> values;
};

/// Self-describing weight container:
///   "RHCK" | u32 version | u64 header bytes | JSON header | float32 payload.
/// The header carries the model config, schedule, stage tag, step counter,
/// RNG seed, config hash and a tensor index (name, shape, offset).
struct Checkpoint {
    ModelConfig config;
    StageTag stage = StageTag::stage1_bg;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    nlohmann::json extra = nlohmann::json::object();
    std::map<std::string, TensorBlob> tensors;

    std::uint64_t config_hash() const;
};

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every model weight into a checkpoint.
Checkpoint snapshot(const HarmonizerModel<float>& model, StageTag stage, std::int64_t step, std::uint64_t seed);

/// Builds a model from a checkpoint; every parameter must be present.
HarmonizerModel<float> restore_model(const Checkpoint& ckpt);

/// Overwrites the parameters in `params` with same-named checkpoint tensors.
void copy_params(const Checkpoint& ckpt, const nn::ParamList<float>& params);

/// Optimizer moments are stored as "adam.m.<name>"/"adam.v.<name>".
void store_optimizer(Checkpoint& ckpt, const nn::Adam<float>& opt);
void load_optimizer(const Checkpoint& ckpt, nn::Adam<float>& opt);

/// FNV-1a over the raw bytes of the listed parameters, for freeze checks.
std::uint64_t params_digest(const nn::ParamList<float>& params);

}  // namespace relharm
