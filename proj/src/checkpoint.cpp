#include "relharm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "relharm/stagesim.hpp"

namespace relharm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {
constexpr std::uint32_t kVersion = 1;
}

json to_json(const DenoiserConfig& c) {
    return {{"size", c.size},
            {"base_channels", c.base_channels},
            {"channel_mult", c.channel_mult},
            {"res_blocks", c.res_blocks},
            {"time_features", c.time_features}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
    DenoiserConfig c;
    c.size = j.value("size", c.size);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.channel_mult = j.value("channel_mult", c.channel_mult);
    c.res_blocks = j.value("res_blocks", c.res_blocks);
    c.time_features = j.value("time_features", c.time_features);
    return c;
}

json to_json(const ModelConfig& c) {
    return {{"denoiser", to_json(c.denoiser)},
            {"feature_channels", c.feature_channels},
            {"timesteps", c.timesteps},
            {"schedule", to_string(c.schedule)},
            {"beta_start", c.beta_start},
            {"beta_end", c.beta_end},
            {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    if (j.contains("denoiser")) c.denoiser = denoiser_config_from_json(j.at("denoiser"));
    c.feature_channels = j.value("feature_channels", c.feature_channels);
    c.timesteps = j.value("timesteps", c.timesteps);
    c.schedule = schedule_kind_from_string(j.value("schedule", to_string(c.schedule)));
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    c.init_seed = j.value("init_seed", c.init_seed);
    return c;
}

std::uint64_t Checkpoint::config_hash() const {
    const std::string s = to_json(config).dump();
    return fnv1a(s.data(), s.size());
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    json index = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, blob] : ckpt.tensors) {
        index.push_back({{"name", name},
                         {"shape", {blob.shape.n, blob.shape.c, blob.shape.h, blob.shape.w}},
                         {"offset", offset}});
        offset += blob.values.size();
    }
    const json header = {{"format", "relharm-checkpoint"},
                         {"config", to_json(ckpt.config)},
                         {"config_hash", ckpt.config_hash()},
                         {"stage", to_string(ckpt.stage)},
                         {"step", ckpt.step},
                         {"seed", ckpt.seed},
                         {"extra", ckpt.extra},
                         {"tensors", index}};
    const std::string text = header.dump();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    const std::uint64_t len = text.size();
    out.write("RHCK", 4);
    out.write(reinterpret_cast<const char*>(&kVersion), 4);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(len));
    for (const auto& [name, blob] : ckpt.tensors)
        out.write(reinterpret_cast<const char*>(blob.values.data()), static_cast<std::streamsize>(blob.values.size() * 4));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&len), 8);
    if (!in || std::memcmp(magic, "RHCK", 4) != 0) throw std::runtime_error("not a checkpoint: " + path.string());
    if (version != kVersion) throw std::runtime_error("unsupported checkpoint version in " + path.string());
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    const json header = json::parse(text);

    Checkpoint ckpt;
    ckpt.config = model_config_from_json(header.at("config"));
    ckpt.stage = stage_tag_from_string(header.at("stage"));
    ckpt.step = header.at("step");
    ckpt.seed = header.at("seed");
    ckpt.extra = header.value("extra", json::object());
    if (header.at("config_hash").get<std::uint64_t>() != ckpt.config_hash())
        throw std::runtime_error("checkpoint config hash mismatch: " + path.string());
    for (const auto& entry : header.at("tensors")) {
        const auto s = entry.at("shape");
        TensorBlob blob{{s[0], s[1], s[2], s[3]}, {}};
        blob.values.resize(blob.shape.numel());
        in.read(reinterpret_cast<char*>(blob.values.data()), static_cast<std::streamsize>(blob.values.size() * 4));
        if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
        ckpt.tensors.emplace(entry.at("name").get<std::string>(), std::move(blob));
    }
    return ckpt;
}

Checkpoint snapshot(const HarmonizerModel<float>& model, StageTag stage, std::int64_t step, std::uint64_t seed) {
    Checkpoint c;
    c.config = model.config;
    c.stage = stage;
    c.step = step;
    c.seed = seed;
    for (const auto& p : model.all_params()) c.tensors[p.name] = {p.tensor.shape(), p.tensor.values()};
    return c;
}

void copy_params(const Checkpoint& ckpt, const nn::ParamList<float>& params) {
    for (const auto& p : params) {
        auto it = ckpt.tensors.find(p.name);
        if (it == ckpt.tensors.end()) throw std::runtime_error("checkpoint lacks parameter " + p.name);
        if (!(it->second.shape == p.tensor.shape()))
            throw nn::ShapeMismatch("checkpoint parameter " + p.name + " has shape " + it->second.shape.str() +
                                    ", model expects " + p.tensor.shape().str());
        auto& dst = p.tensor.node()->value;
        dst = it->second.values;
    }
}

HarmonizerModel<float> restore_model(const Checkpoint& ckpt) {
    HarmonizerModel<float> model(ckpt.config);
    copy_params(ckpt, model.all_params());
    return model;
}

void store_optimizer(Checkpoint& ckpt, const nn::Adam<float>& opt) {
    ckpt.extra["adam_step"] = opt.steps();
    for (const auto& p : opt.params()) {
        const auto& s = opt.state().at(p.name);
        ckpt.tensors["adam.m." + p.name] = {p.tensor.shape(), s.m};
        ckpt.tensors["adam.v." + p.name] = {p.tensor.shape(), s.v};
    }
}

void load_optimizer(const Checkpoint& ckpt, nn::Adam<float>& opt) {
    if (!ckpt.extra.contains("adam_step")) return;
    opt.set_steps(ckpt.extra.at("adam_step").get<std::int64_t>());
    for (const auto& p : opt.params()) {
        auto m = ckpt.tensors.find("adam.m." + p.name);
        auto v = ckpt.tensors.find("adam.v." + p.name);
        if (m == ckpt.tensors.end() || v == ckpt.tensors.end()) continue;
        opt.state()[p.name] = {m->second.values, v->second.values};
    }
}

std::uint64_t params_digest(const nn::ParamList<float>& params) {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& p : params) {
        h = fnv1a(p.name.data(), p.name.size(), h);
        h = fnv1a(p.tensor.data(), p.tensor.numel() * sizeof(float), h);
    }
    return h;
}

}  // namespace relharm
