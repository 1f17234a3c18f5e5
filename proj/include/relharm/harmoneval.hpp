#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "relharm/checkpoint.hpp"
#include "relharm/diffcore/sampler.hpp"
#include "relharm/image.hpp"
#include "relharm/stagesim.hpp"

namespace relharm {

class StageMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Lighting input for one harmonization. Only the field matching `source` is
/// read; both are [0,1] images at the model size.
struct Conditioning {
    LightingSource source = LightingSource::aligned_background;
    Image background;
    Image env_thumb;
};

/// Samples the harmonized image for composite `x_a` (values in [0,1]) and
/// returns it in [0,1].
Image harmonize_composite(const HarmonizerModel<float>& model, const NoiseSchedule& sched, const Image& x_a,
                          const Mask& m, const Conditioning& cond, const SamplerParams& params);

struct HarmonizeRequest {
    Image fg;
    Mask alpha;
    Image bg;
    std::filesystem::path checkpoint;
    SamplerParams sampler;
};

/// A loaded checkpoint ready for inference.
class Harmonizer {
public:
    /// Refuses checkpoints whose stage cannot run from a background alone.
    explicit Harmonizer(Checkpoint ckpt);

    const Checkpoint& checkpoint() const { return ckpt_; }
    const HarmonizerModel<float>& model() const { return model_; }
    int size() const { return model_.config.denoiser.size; }

    /// Resizes the inputs to the model size, composites and samples.
    Image operator()(const Image& fg, const Mask& alpha, const Image& bg, const SamplerParams& params) const;

private:
    Checkpoint ckpt_;
    HarmonizerModel<float> model_;
    NoiseSchedule sched_;
};

Image harmonize(const HarmonizeRequest& req);

// ---------------------------------------------------------------------------
// evaluation

struct EvalRow {
    std::string sample_id;
    double mse = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double fg_mse = 0.0;     // inside the mask only
    double fg_psnr_db = 0.0;
    double bg_mad = 0.0;     // mean |out - background| where m == 0
};

struct Stat {
    double mean = 0.0;
    double std = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    Stat mse, psnr_db, ssim, fg_mse, fg_psnr_db, bg_mad;
    std::uint64_t config_hash = 0;
    std::string source;
};

/// Scores a prediction against the tuple's target.
EvalRow score_prediction(const Image& pred, const TrainingTuple& t);

/// Aggregates mean and population standard deviation.
EvalReport summarize(std::vector<EvalRow> rows);

/// Harmonizes every tuple's composite under `source` (the tuple's background
/// or environment thumbnail) and scores it against its target. Sample i uses
/// seed mix_seed(params.seed, tuple id), so every model sees the same noise.
EvalReport evaluate(const HarmonizerModel<float>& model, LightingSource source,
                    const std::vector<TrainingTuple>& test_set, const SamplerParams& params);

/// TSV: sample_id, mse, psnr_db, ssim, lpips, fg_mse, fg_psnr_db, bg_mad.
/// LPIPS is not computed and written as "n/a".
void write_report_tsv(const EvalReport& report, const std::filesystem::path& path);
std::string format_report(const EvalReport& report);

// ---------------------------------------------------------------------------
// probes

struct ProbeResult {
    bool directional = false;
    double azimuth = 0.0;   // 0: lit from the camera side, positive: from image right
    double strength = 0.0;  // horizontal brightness gradient over the sphere
    double lateral = 0.0;   // image-x component of the gradient
};

inline constexpr double kProbeThreshold = 0.01;

/// Estimates the light azimuth on a sphere subject from brightness-weighted
/// normals. The sphere is reconstructed from the mask (centroid and area).
/// Throws ContractError on an empty mask.
ProbeResult light_azimuth_probe(const Image& img, const Mask& m);

/// Directional with a clearly lateral component (|sin azimuth| >= 0.5).
bool strongly_directional(const ProbeResult& p);

struct FlipCase {
    std::string id;
    Image fg;
    Mask m;
    Image bg;
};

struct FlipOutcome {
    std::string id;
    ProbeResult normal, flipped;
    bool consistent = false;
};

struct FlipReport {
    std::vector<FlipOutcome> cases;
    int consistent = 0;
    double rate = 0.0;
};

/// Harmonizes each case with its background and with the mirrored background
/// (same seed) and checks that the probed light side changes sign. A case
/// whose outputs are not both directional counts as inconsistent.
FlipReport flip_consistency(const Harmonizer& h, const std::vector<FlipCase>& cases, const SamplerParams& params);

/// Sphere tuples of a test set whose target is strongly directional, turned
/// into flip cases (the composite serves as the foreground).
std::vector<FlipCase> flip_cases_from(const std::vector<TrainingTuple>& test_set);

/// Sphere cases lit by one light placed beside the view direction, so the
/// background shows it on one side; half of them are mirrored. Foregrounds
/// are rendered under the lobe-free ambient of the same environment. Only
/// cases whose target is strongly directional are kept.
std::vector<FlipCase> lateral_light_cases(const DatasetConfig& cfg, int n, std::uint64_t seed);

}  // namespace relharm
