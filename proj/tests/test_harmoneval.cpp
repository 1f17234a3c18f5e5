#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "relharm/harmoneval.hpp"
#include "relharm/metrics.hpp"

using namespace relharm;
namespace fs = std::filesystem;

namespace {

Image random_image(int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(c, h, w);
    for (float& v : img.data) v = u(rng);
    return img;
}

ModelConfig small_model() {
    ModelConfig cfg;
    cfg.denoiser.size = 16;
    cfg.denoiser.base_channels = 4;
    cfg.denoiser.time_features = 8;
    cfg.feature_channels = 4;
    return cfg;
}

// Sphere lit by one bright texel in direction (azimuth from the camera side,
// positive towards image right) plus a dim ambient floor.
RenderResult sphere_under_point_light(double azimuth, int size = 48) {
    const int h = 64, w = 128;
    Image img(3, h, w, 0.0f);
    // camera side is world -z; image right is world +x
    const Vec3 l{std::sin(azimuth), 0.0, -std::cos(azimuth)};
    const auto p = dir_to_equirect(l, h, w);
    const int u = static_cast<int>(p.u) % w, v = std::min(static_cast<int>(p.v), h - 1);
    for (int c = 0; c < 3; ++c) img.at(c, v, u) = 4000.0f;
    SubjectSpec s;
    s.radius = 0.6;
    return render_subject(s, EnvMap(std::move(img)), size);
}

}  // namespace

TEST(Metrics, IdenticalImages) {
    const Image a = random_image(3, 24, 24, 1);
    EXPECT_EQ(mse(a, a), 0.0);
    EXPECT_EQ(psnr(a, a), 99.0);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Metrics, PsnrOfOnePercentMse) {
    EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-12);
    const Image a(1, 10, 10, 0.5f), b(1, 10, 10, 0.6f);
    EXPECT_NEAR(psnr(a, b), -10.0 * std::log10(mse(a, b)), 1e-12);
}

TEST(Metrics, SsimIsSymmetricAndBounded) {
    const Image a = random_image(3, 32, 32, 2), b = random_image(3, 32, 32, 3);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
    EXPECT_LT(ssim(a, b), 0.5);
    EXPECT_GE(ssim(a, b), -1.0);
}

TEST(Metrics, ShapeMismatchThrows) {
    EXPECT_THROW(mse(Image(3, 4, 4), Image(3, 4, 5)), ShapeError);
    EXPECT_THROW(ssim(Image(3, 4, 4), Image(1, 4, 4)), ShapeError);
}

TEST(Metrics, MaskedMseIgnoresBackground) {
    Image a(3, 4, 4, 0.0f), b(3, 4, 4, 0.0f);
    Mask m(1, 4, 4, 0.0f);
    m.at(0, 1, 1) = 1.0f;
    b.at(0, 1, 1) = 0.3f;
    b.at(0, 3, 3) = 1.0f;  // outside the mask
    EXPECT_NEAR(masked_mse(a, b, m), 0.09 / 3.0, 1e-7);
}

TEST(Report, GroundTruthScoresPerfectly) {
    DatasetConfig cfg;
    cfg.size = 16;
    cfg.env.height = 16;
    const auto subjects = subject_pool(cfg);
    const auto envs = env_pool(cfg);
    std::vector<EvalRow> rows;
    std::vector<TrainingTuple> tuples;
    for (int i = 0; i < 5; ++i) tuples.push_back(render_from_meta(cfg, envs, sample_tuple_meta(cfg, subjects, i, 1)));
    for (const auto& t : tuples) rows.push_back(score_prediction(t.x_b, t));
    const EvalReport rep = summarize(rows);
    ASSERT_EQ(rep.rows.size(), tuples.size());
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.mse, 0.0);
        EXPECT_EQ(r.bg_mad, 0.0);
    }
    EXPECT_EQ(rep.psnr_db.mean, 99.0);
    EXPECT_EQ(rep.psnr_db.std, 0.0);

    const fs::path tsv = fs::temp_directory_path() / "relharm_report.tsv";
    write_report_tsv(rep, tsv);
    std::ifstream in(tsv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("sample_id\tmse\tpsnr_db\tssim\tlpips", 0), 0u);
    int n = 0;
    while (std::getline(in, line)) {
        EXPECT_NE(line.find("\tn/a\t"), std::string::npos);
        ++n;
    }
    EXPECT_EQ(n, 5);
    fs::remove(tsv);
}

TEST(Report, EvaluateHasOneRowPerSample) {
    DatasetConfig cfg;
    cfg.size = 16;
    cfg.env.height = 16;
    const auto subjects = subject_pool(cfg);
    const auto envs = env_pool(cfg);
    std::vector<TrainingTuple> tuples;
    for (int i = 0; i < 3; ++i) tuples.push_back(render_from_meta(cfg, envs, sample_tuple_meta(cfg, subjects, i, 2)));
    const HarmonizerModel<float> model(small_model());
    const EvalReport rep = evaluate(model, LightingSource::environment, tuples, {SamplerMode::ddim, 3, 1});
    EXPECT_EQ(rep.rows.size(), 3u);
    EXPECT_EQ(rep.source, "environment");
}

TEST(Probe, LightFromCameraReadsZero) {
    const RenderResult r = sphere_under_point_light(0.0);
    const ProbeResult p = light_azimuth_probe(r.fg, r.alpha);
    ASSERT_TRUE(p.directional);
    EXPECT_NEAR(p.azimuth, 0.0, 0.2);
}

TEST(Probe, SignFollowsLightSide) {
    for (double az : {-1.0, -0.5, 0.5, 1.0}) {
        const RenderResult r = sphere_under_point_light(az);
        const ProbeResult p = light_azimuth_probe(r.fg, r.alpha);
        ASSERT_TRUE(p.directional);
        EXPECT_GT(p.azimuth * az, 0.0) << az;
    }
}

TEST(Probe, MirrorNegatesAzimuth) {
    const RenderResult r = sphere_under_point_light(0.7);
    const ProbeResult p = light_azimuth_probe(r.fg, r.alpha);
    const ProbeResult q = light_azimuth_probe(flip_horizontal(r.fg), flip_horizontal(r.alpha));
    EXPECT_NEAR(q.azimuth, -p.azimuth, 1e-9);
}

TEST(Probe, ConstantLightIsNonDirectional) {
    SubjectSpec s;
    s.radius = 0.6;
    const RenderResult r = render_subject(s, EnvMap::constant(32, {0.8, 0.8, 0.8}), 48);
    EXPECT_FALSE(light_azimuth_probe(r.fg, r.alpha).directional);
}

TEST(Probe, EmptyMaskThrows) {
    EXPECT_THROW(light_azimuth_probe(Image(3, 8, 8), Mask(1, 8, 8, 0.0f)), ContractError);
}

TEST(Harmonize, RefusesStageOneCheckpoints) {
    const HarmonizerModel<float> model(small_model());
    try {
        Harmonizer h(snapshot(model, StageTag::stage1_env, 0, 0));
        FAIL() << "expected refusal";
    } catch (const StageMismatch& e) {
        EXPECT_NE(std::string(e.what()).find("environment map"), std::string::npos);
    }
    EXPECT_THROW(Harmonizer(snapshot(model, StageTag::align, 0, 0)), StageMismatch);
}

TEST(Harmonize, DeterministicWithinRangeAndSized) {
    const HarmonizerModel<float> model(small_model());
    const Harmonizer h(snapshot(model, StageTag::final, 0, 0));
    // inputs at a different resolution are resized to the model size
    const Image fg = random_image(3, 24, 24, 4), bg = random_image(3, 24, 24, 5);
    Mask m(1, 24, 24, 0.0f);
    for (int y = 6; y < 18; ++y)
        for (int x = 6; x < 18; ++x) m.at(0, y, x) = 1.0f;
    const SamplerParams p{SamplerMode::ddim, 4, 11};
    const Image a = h(fg, m, bg, p), b = h(fg, m, bg, p);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(a.height, 16);
    EXPECT_EQ(a.channels, 3);
    for (float v : a.data) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    Mask bad = m;
    bad.data[0] = 1.5f;
    EXPECT_THROW(h(fg, bad, bg, p), ContractError);
}

TEST(Harmonize, RequestLoadsCheckpointFromDisk) {
    const HarmonizerModel<float> model(small_model());
    const fs::path path = fs::temp_directory_path() / "relharm_harmonize.ckpt";
    save_checkpoint(path, snapshot(model, StageTag::finetuned, 0, 0));
    HarmonizeRequest req{random_image(3, 16, 16, 6), Mask(1, 16, 16, 1.0f), random_image(3, 16, 16, 7), path,
                         {SamplerMode::ddim, 3, 2}};
    const Image out = harmonize(req);
    EXPECT_EQ(out.data, Harmonizer(load_checkpoint(path))(req.fg, req.alpha, req.bg, req.sampler).data);
    fs::remove(path);
}
