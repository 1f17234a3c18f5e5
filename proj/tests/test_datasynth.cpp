#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "relharm/datasynth.hpp"

using namespace relharm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("relharm_synth_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Held-out scenes shared by the tests in this file.
const fs::path& scenes() {
    static const fs::path root = [] {
        const fs::path p = scratch("scenes");
        DatasetConfig cfg;
        cfg.size = 16;
        cfg.env.height = 16;
        cfg.pool_seed = 99;
        build_dataset(cfg, 6, 3, p);
        return p;
    }();
    return root;
}

RelightCondition same_as_scene(const Dataset& ds, const TupleMeta& scene) {
    RelightCondition c;
    c.env = rotate_envmap(env_pool(ds.config).at(scene.env_b), scene.rot_b);
    CropSpec view = scene.crop;
    view.out_w = view.out_h = ds.config.size;
    c.background = quantize8(tonemap_ldr(project_to_background(c.env, view)));
    c.env_thumb = quantize8(env_thumbnail(c.env, ds.config.size));
    return c;
}

}  // namespace

TEST(CleanBackground, MatchesProjectedEnvironment) {
    const Dataset ds = open_dataset(scenes());
    const CleanBackgrounds clean(ds);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const TrainingTuple t = ds.load(i);
        const Image bg = clean(t.meta);
        EXPECT_EQ(bg.data, t.y_b.data);
        EXPECT_EQ(bg.data, same_as_scene(ds, t.meta).background.data);
    }
}

TEST(CleanBackground, RecompositingReproducesRealImage) {
    const Dataset ds = open_dataset(scenes());
    const CleanBackgrounds clean(ds);
    const auto envs = env_pool(ds.config);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const TrainingTuple t = ds.load(i);
        CropSpec view = t.meta.crop;
        view.out_w = view.out_h = ds.config.size;
        const RenderResult r =
            render_subject(t.meta.subject, rotate_envmap(envs[t.meta.env_b], t.meta.rot_b), ds.config.size, view);
        const Image again = composite(r.fg, t.m, clean(t.meta));
        const std::size_t plane = t.m.plane();
        for (int c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < plane; ++p) {
                const float d = std::abs(again.data[c * plane + p] - t.x_b.data[c * plane + p]);
                if (t.m.data[p] == 0.0f)
                    ASSERT_EQ(d, 0.0f);
                else
                    ASSERT_LT(d, 2.0f / 255.0f);
            }
    }
}

TEST(CleanBackground, UnknownSceneIsRejected) {
    const Dataset ds = open_dataset(scenes());
    TupleMeta bogus = ds.rows[0].meta;
    bogus.env_b = 1000;
    const CleanBackgrounds clean(ds);
    EXPECT_THROW(clean(bogus), ContractError);
}

TEST(Relight, BackgroundIsCleanAndForegroundChanges) {
    const Dataset ds = open_dataset(scenes());
    const CleanBackgrounds clean(ds);
    const TrainingTuple t = ds.load(0);
    const Image bg = clean(t.meta);
    auto draw = [&](int k) { return draw_condition(ds.config.env, t.meta.crop, ds.config.size, 500 + k); };
    const RelightResult r = relight_input(t.x_b, t.m, bg, t.meta, simulator_relighter(ds.config.size), draw, 1);
    EXPECT_GT(r.fg_diff, kMinRelightDiff);
    const std::size_t plane = t.m.plane();
    for (std::size_t p = 0; p < plane; ++p)
        if (t.m.data[p] == 0.0f) {
            for (int c = 0; c < 3; ++c) ASSERT_EQ(r.input.data[c * plane + p], bg.data[c * plane + p]);
        }
}

TEST(Relight, SameLightingIsRejected) {
    const Dataset ds = open_dataset(scenes());
    const CleanBackgrounds clean(ds);
    const TrainingTuple t = ds.load(1);
    int calls = 0;
    auto draw = [&](int) {
        ++calls;
        return same_as_scene(ds, t.meta);
    };
    EXPECT_THROW(relight_input(t.x_b, t.m, clean(t.meta), t.meta, simulator_relighter(ds.config.size), draw, 1),
                 std::runtime_error);
    EXPECT_EQ(calls, kMaxRelightAttempts);
}

TEST(Relight, ConditionKindsAreBalanced) {
    CropSpec crop;
    int env = 0;
    EnvGenConfig ecfg;
    ecfg.height = 8;
    for (int i = 0; i < 400; ++i)
        env += draw_condition(ecfg, crop, 8, static_cast<std::uint64_t>(i)).kind == RelightCondition::Kind::environment;
    EXPECT_NEAR(env / 400.0, 0.5, 0.08);
}

TEST(SynthDataset, ContractsHold) {
    const fs::path a = scratch("a"), b = scratch("b");
    const Relighter sim = simulator_relighter(16);
    build_synth_dataset(scenes(), sim, {9, 4, "simulator"}, a);
    build_synth_dataset(scenes(), sim, {9, 4, "simulator"}, b);
    EXPECT_EQ(manifest_hash(a), manifest_hash(b));
    EXPECT_EQ(validate_dataset(a), 9u);

    const Dataset src = open_dataset(scenes()), out = open_dataset(a);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const ManifestRow& row = out.rows[i];
        const ManifestRow& real = src.rows[i % src.size()];
        // target bytes are the source image bytes
        EXPECT_EQ(slurp(a / row.x_b), slurp(scenes() / real.x_b));
        EXPECT_NE(row.provenance.find("real=" + std::to_string(real.meta.id)), std::string::npos);
        EXPECT_NE(row.provenance.find("model=simulator"), std::string::npos);
        const TrainingTuple t = out.load(i);
        const std::size_t plane = t.m.plane();
        for (std::size_t p = 0; p < plane; ++p)
            if (t.m.data[p] == 0.0f) {
                for (int c = 0; c < 3; ++c) ASSERT_EQ(t.x_a.data[c * plane + p], t.x_b.data[c * plane + p]);
            }
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(SynthDataset, ModelRelighterRuns) {
    ModelConfig cfg;
    cfg.denoiser.size = 16;
    cfg.denoiser.base_channels = 4;
    cfg.denoiser.time_features = 8;
    cfg.feature_channels = 4;
    const Checkpoint fin = snapshot(HarmonizerModel<float>(cfg), StageTag::final, 0, 0);
    const fs::path out = scratch("model");
    build_synth_dataset(scenes(), model_relighter(fin, 4), {3, 1, "untrained"}, out);
    EXPECT_EQ(validate_dataset(out), 3u);
    EXPECT_THROW(model_relighter(snapshot(HarmonizerModel<float>(cfg), StageTag::stage1_bg, 0, 0)), std::invalid_argument);
    fs::remove_all(out);
}
