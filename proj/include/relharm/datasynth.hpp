#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "relharm/checkpoint.hpp"
#include "relharm/diffcore/sampler.hpp"
#include "relharm/stagesim.hpp"

namespace relharm {

/// Random lighting used to relight a "real" subject: an environment map and
/// the background it projects to under the scene's crop.
struct RelightCondition {
    enum class Kind { environment, background };
    Kind kind = Kind::environment;
    EnvMap env;
    Image background;  // [0,1], scene crop of `env`
    Image env_thumb;   // [0,1]
    std::uint64_t seed = 0;
};

std::string to_string(RelightCondition::Kind k);

/// Draws the condition kind 50/50 and a fresh procedural environment.
RelightCondition draw_condition(const EnvGenConfig& env_cfg, const CropSpec& crop, int size, std::uint64_t seed);

/// Produces a relit full image for composite `x_a` (subject over the
/// condition's background). Only the masked region of the result is used.
using Relighter = std::function<Image(const Image& x_a, const Mask& m, const RelightCondition& cond,
                                      const TupleMeta& scene, std::uint64_t seed)>;

/// Relights with a trained model: environment conditions go through F_env,
/// background conditions through align(F_bg). Needs a final or finetuned
/// checkpoint; sampling is deterministic DDIM.
Relighter model_relighter(const Checkpoint& ckpt, int steps = 20);

/// Re-renders the scene's subject under the condition (reference relighter).
Relighter simulator_relighter(int size);

/// Background of a held-out scene with the subject removed: the scene's
/// environment projected through its crop, 8-bit quantized like the dataset.
class CleanBackgrounds {
public:
    explicit CleanBackgrounds(const Dataset& scenes);
    /// Throws ContractError("missing scene metadata") for unknown scenes.
    Image operator()(const TupleMeta& scene) const;

private:
    DatasetConfig cfg_;
    std::vector<EnvMap> envs_;
};

struct RelightResult {
    Image input;
    RelightCondition cond;
    int attempts = 0;
    double fg_diff = 0.0;
};

inline constexpr double kMinRelightDiff = 0.02;
inline constexpr int kMaxRelightAttempts = 10;

/// Mean |a - b| over mask > 0.5, all channels.
double masked_mean_abs_diff(const Image& a, const Image& b, const Mask& m);

/// Relights the subject of `real` and composites it onto `clean_bg`.
/// Candidates whose masked difference to `real` is not above
/// kMinRelightDiff are redrawn; gives up after kMaxRelightAttempts.
/// `draw` returns the condition for attempt k.
RelightResult relight_input(const Image& real, const Mask& m, const Image& clean_bg, const TupleMeta& scene,
                            const Relighter& relighter,
                            const std::function<RelightCondition(int attempt)>& draw, std::uint64_t seed);

struct SynthOptions {
    int n = 200;
    std::uint64_t seed = 0;
    std::string relighter_id;  // recorded in provenance, e.g. checkpoint hash
};

/// Builds n pairs from the held-out scene dataset at `scenes_root`: target is
/// the scene image file itself, input is the relit subject over the clean
/// background. Writes the stagesim layout with a provenance column.
void build_synth_dataset(const std::filesystem::path& scenes_root, const Relighter& relighter,
                         const SynthOptions& opt, const std::filesystem::path& out_root);

}  // namespace relharm
