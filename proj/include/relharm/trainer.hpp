#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "relharm/checkpoint.hpp"
#include "relharm/stagesim.hpp"

namespace relharm {

enum class TrainStage { stage1_bg, stage1_env, stage1_uncond, align, finetune };

std::string to_string(TrainStage s);
TrainStage train_stage_from_string(const std::string& s);

/// Everything a training job reads. Serialised as nested JSON; see
/// stage_config_to_json for the schema and defaults.
struct StageConfig {
    TrainStage stage = TrainStage::stage1_bg;
    std::string dataset;        // light-stage tuples
    std::string synth_dataset;  // finetune only
    double mix_lightstage = 1.0;
    double mix_synth = 1.0;
    int steps = 2000;
    int batch_size = 8;
    double lr = 5e-5;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // 0: only at the end
    std::string checkpoint_path;
    std::string loss_log;  // append-only TSV, optional
    std::string resume;    // checkpoint to continue from, optional
    // inputs of the later stages
    std::string bg_checkpoint;
    std::string env_checkpoint;
    std::string final_checkpoint;
    ModelConfig model;

    /// Names of the parameter groups this stage updates.
    std::vector<std::string> trainable_groups() const;
};

nlohmann::json stage_config_to_json(const StageConfig& c);
StageConfig stage_config_from_json(const nlohmann::json& j);
StageConfig load_stage_config(const std::filesystem::path& path);

struct LossRecord {
    std::int64_t step;
    double loss;
    double seconds;
};

class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One tuple prepared for the networks: images mapped to [-1,1], mask in [0,1].
struct Sample {
    std::vector<float> x_a, m, y_b, z_thumb, x_b;
};

struct TrainingData {
    int size = 0;
    std::vector<Sample> samples;
};

Sample make_sample(const TrainingTuple& t);
TrainingData load_training_data(const std::filesystem::path& root);
TrainingData to_training_data(const std::vector<TrainingTuple>& tuples);

/// Batch tensors assembled from samples.
struct Batch {
    nn::Tensor<float> x_a, m, y_b, z_thumb, x_b;
};
Batch make_batch(const std::vector<const Sample*>& samples, int size);

/// Picks batch members from two pools with probability proportional to the
/// configured ratio. Deterministic given the seed.
class MixedBatchSampler {
public:
    struct Pick {
        int pool;  // 0 = light stage, 1 = synthesized
        std::size_t index;
    };
    MixedBatchSampler(std::size_t pool0, std::size_t pool1, double ratio0, double ratio1, std::uint64_t seed);
    std::vector<Pick> next(int batch_size);

private:
    std::size_t sizes_[2];
    double p0_;
    std::mt19937_64 rng_;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossRecord> losses;
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Denoising objective for one batch: || eps - U(x_t, t, x_a, F(cond)) ||^2.
/// Returns the scalar loss tensor (graph attached when recording).
nn::Tensor<float> denoising_loss(const HarmonizerModel<float>& model, const NoiseSchedule& sched, const Batch& batch,
                                 LightingSource source, const std::vector<int>& t, const std::vector<float>& eps);

/// Stage I: jointly trains denoiser, conditioning branch and the extractor of
/// `source` (background or environment; `none` trains the bare denoiser).
TrainResult train_stage1(const TrainingData& data, LightingSource source, const StageConfig& cfg,
                         const ProgressFn& progress = {});

/// Stage II: trains only the alignment network on (F_bg(y), F_env(z)) pairs
/// with a mean absolute error. Everything else is copied from the inputs and
/// stays bit-identical.
TrainResult train_align(const TrainingData& data, const Checkpoint& bg_ckpt, const Checkpoint& env_ckpt,
                        const StageConfig& cfg, const ProgressFn& progress = {});

/// Final model: env-trained denoiser + branch (+ F_env), background extractor
/// from the bg model, alignment from the align checkpoint. No weight changes.
Checkpoint assemble_final(const Checkpoint& env_unet_ckpt, const Checkpoint& bg_extractor_ckpt,
                          const Checkpoint& align_ckpt);

/// Stage III: only the denoiser trains, on a ratio-mixed stream of light-stage
/// and synthesized pairs, conditioned through align(F_bg(background)).
TrainResult train_finetune(const TrainingData& lightstage, const TrainingData& synth, const Checkpoint& final_ckpt,
                           const StageConfig& cfg, const ProgressFn& progress = {});

/// Mean |align(F_bg(y)) - F_env(z)| and the unaligned baseline
/// mean |F_bg(y) - F_env(z)| over a data set.
struct AlignmentReport {
    double aligned_l1 = 0.0;
    double baseline_l1 = 0.0;
};
AlignmentReport alignment_l1(const HarmonizerModel<float>& model, const TrainingData& data);

/// Runs the job described by a config (dispatching on stage), writes the
/// checkpoint to `out` and returns it.
Checkpoint run_training_job(const StageConfig& cfg, const std::filesystem::path& out, const ProgressFn& progress = {});

}  // namespace relharm
