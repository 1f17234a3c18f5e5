#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "relharm/diffcore/sampler.hpp"
#include "relharm/trainer.hpp"

using namespace relharm;
namespace fs = std::filesystem;

namespace {

DatasetConfig data_config() {
    DatasetConfig cfg;
    cfg.size = 16;
    cfg.env.height = 16;
    return cfg;
}

std::vector<TrainingTuple> make_tuples(int n, std::uint64_t seed) {
    const DatasetConfig cfg = data_config();
    const auto subjects = subject_pool(cfg);
    const auto envs = env_pool(cfg);
    std::vector<TrainingTuple> out;
    for (int i = 0; i < n; ++i) out.push_back(render_from_meta(cfg, envs, sample_tuple_meta(cfg, subjects, i, seed)));
    return out;
}

const TrainingData& data64() {
    static const TrainingData d = to_training_data(make_tuples(64, 1));
    return d;
}

StageConfig small_stage(int steps) {
    StageConfig c;
    c.model.denoiser.size = 16;
    c.model.denoiser.base_channels = 4;
    c.model.denoiser.time_features = 8;
    c.model.feature_channels = 4;
    c.steps = steps;
    c.batch_size = 4;
    c.lr = 1e-3;
    c.seed = 5;
    return c;
}

double mean(const std::vector<LossRecord>& r, std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += r[i].loss;
    return s / static_cast<double>(to - from);
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("relharm_trainer_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Loss, PerfectPredictionIsZero) {
    const std::vector<float> eps{0.1f, -2.0f, 0.7f};
    EXPECT_EQ(nn::mse_loss(nn::Tensor<float>::from({1, 3, 1, 1}, eps), eps).values()[0], 0.0f);
}

TEST(StageOne, SmokeRunReducesLoss) {
    const TrainResult r = train_stage1(data64(), LightingSource::background, small_stage(200));
    ASSERT_EQ(r.losses.size(), 200u);
    EXPECT_LT(mean(r.losses, 150, 200), mean(r.losses, 0, 50));
    for (const auto& rec : r.losses) EXPECT_TRUE(std::isfinite(rec.loss));
    EXPECT_EQ(r.checkpoint.stage, StageTag::stage1_bg);
}

TEST(StageOne, EveryTrainableTensorMoves) {
    // the zero-initialised projections keep the branch and extractor
    // gradients at zero on the first step; by the second every tensor moves
    const StageConfig cfg = small_stage(2);
    const HarmonizerModel<float> init(cfg.model);
    const TrainResult r = train_stage1(data64(), LightingSource::environment, cfg);
    const HarmonizerModel<float> after = restore_model(r.checkpoint);
    for (const auto& group : {std::pair{init.unet_params(), after.unet_params()},
                              std::pair{init.branch_params(), after.branch_params()},
                              std::pair{init.f_env_params(), after.f_env_params()}}) {
        for (std::size_t i = 0; i < group.first.size(); ++i)
            EXPECT_NE(group.first[i].tensor.values(), group.second[i].tensor.values()) << group.first[i].name;
    }
    EXPECT_EQ(params_digest(init.f_bg_params()), params_digest(after.f_bg_params()));
    EXPECT_EQ(params_digest(init.align_params()), params_digest(after.align_params()));
}

TEST(StageOne, DeterministicLossSequence) {
    const auto a = train_stage1(data64(), LightingSource::background, small_stage(15));
    const auto b = train_stage1(data64(), LightingSource::background, small_stage(15));
    ASSERT_EQ(a.losses.size(), b.losses.size());
    for (std::size_t i = 0; i < a.losses.size(); ++i) EXPECT_EQ(a.losses[i].loss, b.losses[i].loss) << "step " << i;
}

TEST(StageOne, ResumeMatchesUninterruptedRun) {
    const fs::path dir = scratch("resume");
    StageConfig cfg = small_stage(12);
    cfg.checkpoint_every = 6;
    cfg.checkpoint_path = (dir / "mid.ckpt").string();
    StageConfig first = cfg;
    first.steps = 6;
    train_stage1(data64(), LightingSource::background, first);
    StageConfig second = cfg;
    second.resume = cfg.checkpoint_path;
    second.checkpoint_path = (dir / "end.ckpt").string();
    const TrainResult resumed = train_stage1(data64(), LightingSource::background, second);
    const TrainResult straight = train_stage1(data64(), LightingSource::background, small_stage(12));
    EXPECT_EQ(resumed.checkpoint.step, 12);
    ASSERT_EQ(resumed.losses.size(), 6u);
    EXPECT_EQ(resumed.losses.back().loss, straight.losses.back().loss);
    const auto a = restore_model(resumed.checkpoint), b = restore_model(straight.checkpoint);
    EXPECT_EQ(params_digest(a.all_params()), params_digest(b.all_params()));
    fs::remove_all(dir);
}

TEST(StageOne, NonFiniteLossAborts) {
    TrainingData bad = data64();
    for (auto& s : bad.samples) s.x_b[0] = std::nanf("");
    try {
        train_stage1(bad, LightingSource::background, small_stage(3));
        FAIL() << "expected abort";
    } catch (const TrainingAborted& e) {
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("lr"), std::string::npos);
    }
}

TEST(StageTwo, OnlyAlignChanges) {
    const StageConfig cfg = small_stage(3);
    const Checkpoint bg = train_stage1(data64(), LightingSource::background, cfg).checkpoint;
    const Checkpoint env = train_stage1(data64(), LightingSource::environment, cfg).checkpoint;
    StageConfig acfg = small_stage(100);
    const TrainResult r = train_align(data64(), bg, env, acfg);
    EXPECT_EQ(r.checkpoint.stage, StageTag::align);
    const auto out = restore_model(r.checkpoint);
    const auto env_model = restore_model(env), bg_model = restore_model(bg);
    EXPECT_EQ(params_digest(out.unet_params()), params_digest(env_model.unet_params()));
    EXPECT_EQ(params_digest(out.branch_params()), params_digest(env_model.branch_params()));
    EXPECT_EQ(params_digest(out.f_env_params()), params_digest(env_model.f_env_params()));
    EXPECT_EQ(params_digest(out.f_bg_params()), params_digest(bg_model.f_bg_params()));
    EXPECT_NE(params_digest(out.align_params()), params_digest(env_model.align_params()));
    // training data fit: aligned features closer to the env features than raw ones
    const AlignmentReport rep = alignment_l1(out, data64());
    EXPECT_LT(rep.aligned_l1, rep.baseline_l1);
}

TEST(StageTwo, MissingCheckpointIsReported) {
    StageConfig cfg = small_stage(1);
    cfg.stage = TrainStage::align;
    cfg.bg_checkpoint = "/nonexistent/bg.ckpt";
    EXPECT_THROW(run_training_job(cfg, fs::temp_directory_path() / "never.ckpt"), std::runtime_error);
}

TEST(Assemble, PerfectlyAlignedFeaturesReproduceEnvModel) {
    const StageConfig cfg = small_stage(3);
    const Checkpoint env = train_stage1(data64(), LightingSource::environment, cfg).checkpoint;
    // stub: a "bg" checkpoint whose extractor is the env extractor
    HarmonizerModel<float> stub = restore_model(env);
    {
        const auto src = stub.f_env_params(), dst = stub.f_bg_params();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i].tensor.node()->value = src[i].tensor.values();
    }
    const Checkpoint bg = snapshot(stub, StageTag::stage1_bg, 3, 0);
    const Checkpoint align = snapshot(HarmonizerModel<float>(cfg.model), StageTag::align, 0, 0);  // identity
    const Checkpoint fin = assemble_final(env, bg, align);
    EXPECT_EQ(fin.stage, StageTag::final);

    const auto m_env = restore_model(env), m_fin = restore_model(fin);
    const TrainingTuple t = make_tuples(1, 9)[0];
    const Batch b = make_batch({&to_training_data({t}).samples[0]}, 16);
    const NoiseSchedule sched = cfg.model.make_noise_schedule();
    const SamplerParams p{SamplerMode::ddim, 5, 3};
    const auto a = sample(m_env, sched, b.x_a, b.m, m_env.features(LightingSource::environment, {}, b.z_thumb), p);
    const auto c = sample(m_fin, sched, b.x_a, b.m, m_fin.features(LightingSource::aligned_background, b.z_thumb, {}), p);
    EXPECT_EQ(a.values(), c.values());
}

TEST(Assemble, MismatchedFeatureWidthIsRejected) {
    StageConfig cfg = small_stage(1);
    const Checkpoint env = snapshot(HarmonizerModel<float>(cfg.model), StageTag::stage1_env, 0, 0);
    cfg.model.feature_channels = 6;
    const Checkpoint other = snapshot(HarmonizerModel<float>(cfg.model), StageTag::stage1_bg, 0, 0);
    EXPECT_THROW(assemble_final(env, other, env), std::invalid_argument);
}

TEST(StageThree, OnlyDenoiserChanges) {
    const StageConfig cfg = small_stage(2);
    const Checkpoint env = train_stage1(data64(), LightingSource::environment, cfg).checkpoint;
    const Checkpoint bg = train_stage1(data64(), LightingSource::background, cfg).checkpoint;
    const Checkpoint align = train_align(data64(), bg, env, cfg).checkpoint;
    const Checkpoint fin = assemble_final(env, bg, align);
    const TrainingData synth = to_training_data(make_tuples(16, 77));
    const TrainResult r = train_finetune(data64(), synth, fin, small_stage(5));
    EXPECT_EQ(r.checkpoint.stage, StageTag::finetuned);
    const auto before = restore_model(fin), after = restore_model(r.checkpoint);
    EXPECT_NE(params_digest(before.unet_params()), params_digest(after.unet_params()));
    EXPECT_EQ(params_digest(before.branch_params()), params_digest(after.branch_params()));
    EXPECT_EQ(params_digest(before.f_bg_params()), params_digest(after.f_bg_params()));
    EXPECT_EQ(params_digest(before.f_env_params()), params_digest(after.f_env_params()));
    EXPECT_EQ(params_digest(before.align_params()), params_digest(after.align_params()));
    EXPECT_THROW(train_finetune(data64(), synth, env, small_stage(1)), std::invalid_argument);
}

TEST(Mixing, RatioIsHonoured) {
    MixedBatchSampler s(100, 50, 2.0, 1.0, 4);
    int pool0 = 0, total = 0;
    for (int b = 0; b < 1000; ++b)
        for (const auto& p : s.next(8)) {
            pool0 += p.pool == 0;
            ++total;
            ASSERT_LT(p.index, p.pool == 0 ? 100u : 50u);
        }
    EXPECT_NEAR(static_cast<double>(pool0) / total, 2.0 / 3.0, 0.05);
}

TEST(Config, JsonRoundTripAndFreezeDescriptor) {
    StageConfig c = small_stage(77);
    c.stage = TrainStage::finetune;
    c.mix_synth = 0.5;
    c.final_checkpoint = "final.ckpt";
    const StageConfig d = stage_config_from_json(stage_config_to_json(c));
    EXPECT_EQ(d.stage, TrainStage::finetune);
    EXPECT_EQ(d.steps, 77);
    EXPECT_EQ(d.mix_synth, 0.5);
    EXPECT_EQ(d.final_checkpoint, "final.ckpt");
    EXPECT_EQ(d.model.denoiser.base_channels, 4);
    EXPECT_EQ(d.trainable_groups(), std::vector<std::string>{"unet"});
    auto j = stage_config_to_json(c);
    j["trainable"] = {"unet", "branch"};
    EXPECT_THROW(stage_config_from_json(j), std::invalid_argument);
}

TEST(Config, DefaultLearningRate) { EXPECT_DOUBLE_EQ(StageConfig{}.lr, 5e-5); }
