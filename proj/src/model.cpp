#include "relharm/model.hpp"

#include "relharm/diffcore/sampler.hpp"

namespace relharm {

std::string to_string(StageTag s) {
    switch (s) {
        case StageTag::stage1_bg: return "stage1_bg";
        case StageTag::stage1_env: return "stage1_env";
        case StageTag::align: return "align";
        case StageTag::final: return "final";
        case StageTag::finetuned: return "finetuned";
    }
    return "?";
}

StageTag stage_tag_from_string(const std::string& s) {
    for (StageTag t : {StageTag::stage1_bg, StageTag::stage1_env, StageTag::align, StageTag::final, StageTag::finetuned})
        if (to_string(t) == s) return t;
    throw std::invalid_argument("unknown stage tag: " + s);
}

std::string to_string(LightingSource s) {
    switch (s) {
        case LightingSource::none: return "none";
        case LightingSource::background: return "background";
        case LightingSource::aligned_background: return "aligned_background";
        case LightingSource::environment: return "environment";
    }
    return "?";
}

LightingSource lighting_source_from_string(const std::string& s) {
    for (LightingSource l : {LightingSource::none, LightingSource::background, LightingSource::aligned_background,
                             LightingSource::environment})
        if (to_string(l) == s) return l;
    throw std::invalid_argument("unknown lighting source: " + s);
}

LightingSource default_source(StageTag stage) {
    switch (stage) {
        case StageTag::stage1_bg: return LightingSource::background;
        case StageTag::stage1_env: return LightingSource::environment;
        case StageTag::align:
        case StageTag::final:
        case StageTag::finetuned: return LightingSource::aligned_background;
    }
    return LightingSource::none;
}

std::string to_string(SamplerMode m) { return m == SamplerMode::ddim ? "ddim" : "ddpm"; }

SamplerMode sampler_mode_from_string(const std::string& s) {
    if (s == "ddim") return SamplerMode::ddim;
    if (s == "ddpm") return SamplerMode::ddpm;
    throw std::invalid_argument("unknown sampler mode: " + s);
}

std::vector<int> sampling_timesteps(int T, int steps) {
    if (steps < 1 || steps > T) throw std::invalid_argument("sampling_timesteps: steps must lie in [1, T]");
    std::vector<int> ts;
    for (int k = 0; k < steps; ++k) ts.push_back(T - static_cast<int>(static_cast<long>(k) * T / steps));
    return ts;
}

}  // namespace relharm
