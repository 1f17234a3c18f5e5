#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "relharm/stagesim.hpp"

using namespace relharm;
namespace fs = std::filesystem;

namespace {

SubjectSpec centred_sphere(double r) {
    SubjectSpec s;
    s.radius = r;
    s.albedo = {0.8, 0.5, 0.3};
    return s;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("relharm_test_" + name);
    fs::remove_all(p);
    return p;
}

DatasetConfig tiny_config() {
    DatasetConfig cfg;
    cfg.size = 16;
    cfg.n_subjects = 10;
    cfg.n_envs = 20;
    cfg.env.height = 16;
    return cfg;
}

}  // namespace

TEST(Renderer, LambertianSphereUnderConstantEnv) {
    const double L = 1.7;
    const EnvMap env = EnvMap::constant(64, {L, L, L});
    const SubjectSpec s = centred_sphere(0.6);
    const RenderResult r = render_subject(s, env, 48);
    int checked = 0;
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            if (r.alpha.at(0, y, x) <= 0.0f) continue;
            for (int c = 0; c < 3; ++c) ASSERT_NEAR(r.linear.at(c, y, x) / (s.albedo[c] * L), 1.0, 0.01);
            ++checked;
        }
    EXPECT_GT(checked, 500);
}

TEST(Renderer, DarkSideIsExactlyZero) {
    Image img(3, 32, 64, 0.0f);
    const int tv = 14, tu = 50;  // slightly above the horizon, towards +x
    for (int c = 0; c < 3; ++c) img.at(c, tv, tu) = 40.0f;
    const EnvMap env(std::move(img));
    const Vec3 l = equirect_to_dir(tu + 0.5, tv + 0.5, 32, 64);
    const SubjectSpec s = centred_sphere(0.7);
    const int size = 40;
    const RenderResult r = render_subject(s, env, size);
    int dark = 0, lit = 0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            if (r.alpha.at(0, i, j) <= 0.0f) continue;
            const double x = (j + 0.5) * 2.0 / size - 1.0, y = 1.0 - (i + 0.5) * 2.0 / size;
            double qx = x / s.radius, qy = y / s.radius;
            const double q2 = qx * qx + qy * qy;
            if (q2 > 1.0) {
                qx /= std::sqrt(q2);
                qy /= std::sqrt(q2);
            }
            const Vec3 n{qx, qy, -std::sqrt(std::max(0.0, 1.0 - qx * qx - qy * qy))};
            if (dot(n, l) <= 0.0) {
                for (int c = 0; c < 3; ++c) ASSERT_EQ(r.linear.at(c, i, j), 0.0f);
                ++dark;
            } else {
                ++lit;
            }
        }
    EXPECT_GT(dark, 50);
    EXPECT_GT(lit, 50);
}

TEST(Renderer, MaskAreaMatchesSilhouette) {
    const EnvMap env = EnvMap::constant(8, {1, 1, 1});
    for (double r : {0.3, 0.55, 0.8}) {
        const int size = 128;
        const RenderResult res = render_subject(centred_sphere(r), env, size);
        double area = 0.0;
        for (float a : res.alpha.data) area += a;
        const double want = kPi * r * r / 4.0 * size * size;
        EXPECT_NEAR(area / want, 1.0, 0.01) << "r=" << r;
    }
}

TEST(Renderer, DoublingEnvDoublesRadiance) {
    EnvGenConfig ecfg;
    const EnvMap env = generate_envmap(ecfg, 3);
    SubjectSpec s = centred_sphere(0.5);
    s.specular_strength = 0.3;
    const RenderResult a = render_subject(s, env, 24), b = render_subject(s, env.scaled(2.0), 24);
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.linear.size(); ++i) {
        sa += a.linear.data[i];
        sb += b.linear.data[i];
    }
    EXPECT_NEAR(sb / sa, 2.0, 1e-5);
}

TEST(Renderer, RejectsSubjectOutsideFrame) {
    SubjectSpec s = centred_sphere(0.5);
    s.cx = 0.7;
    EXPECT_THROW(render_subject(s, EnvMap::constant(8, {1, 1, 1}), 16), ContractError);
}

TEST(Composite, TrivialAlphas) {
    const Image fg(3, 4, 4, 1.0f), bg(3, 4, 4, 0.0f);
    EXPECT_EQ(composite(fg, Mask(1, 4, 4, 1.0f), bg).data, fg.data);
    EXPECT_EQ(composite(fg, Mask(1, 4, 4, 0.0f), bg).data, bg.data);
    for (float v : composite(fg, Mask(1, 4, 4, 0.5f), bg).data) EXPECT_FLOAT_EQ(v, 0.5f);
    EXPECT_THROW(composite(fg, Mask(1, 4, 4), Image(3, 4, 5)), ShapeError);
}

TEST(Tuple, SameLightingGivesIdenticalImages) {
    const EnvMap env = generate_envmap(EnvGenConfig{}, 4);
    CropSpec crop{60.0, 0.0, 0.05, 32, 32};
    const TrainingTuple t = render_tuple(centred_sphere(0.5), env, env, crop, 32, 1);
    EXPECT_EQ(t.x_a.data, t.x_b.data);
}

TEST(Tuple, TargetMatchesBackgroundOutsideMask) {
    const EnvMap a = generate_envmap(EnvGenConfig{}, 5), b = generate_envmap(EnvGenConfig{}, 6);
    CropSpec crop{70.0, 0.0, 0.0, 32, 32};
    SubjectSpec s = centred_sphere(0.45);
    s.geometry = Geometry::bust;
    s.cy = 0.3;
    const TrainingTuple t = render_tuple(s, a, b, crop, 32, 2);
    EXPECT_NO_THROW(validate_tuple(t));
    const std::size_t plane = t.m.plane();
    for (std::size_t p = 0; p < plane; ++p)
        if (t.m.data[p] == 0.0f) {
            for (int c = 0; c < 3; ++c) {
                ASSERT_EQ(t.x_b.data[c * plane + p], t.y_b.data[c * plane + p]);
                ASSERT_EQ(t.x_a.data[c * plane + p], t.y_b.data[c * plane + p]);
            }
        }
}

TEST(Dataset, BuildIsDeterministic) {
    const DatasetConfig cfg = tiny_config();
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    build_dataset(cfg, 12, 7, a);
    build_dataset(cfg, 12, 7, b);
    EXPECT_EQ(manifest_hash(a), manifest_hash(b));
    const Dataset da = open_dataset(a), db = open_dataset(b);
    for (std::size_t i = 0; i < da.size(); ++i) EXPECT_EQ(file_hash(a / da.rows[i].x_b), file_hash(b / db.rows[i].x_b));
    build_dataset(cfg, 12, 8, b);
    EXPECT_NE(manifest_hash(a), manifest_hash(b));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Dataset, CountAndValidation) {
    const fs::path root = scratch("count");
    build_dataset(tiny_config(), 100, 3, root);
    EXPECT_EQ(open_dataset(root).size(), 100u);
    EXPECT_EQ(validate_dataset(root), 100u);
    fs::remove_all(root);
}

TEST(Dataset, TamperingIsDetected) {
    const fs::path root = scratch("tamper");
    build_dataset(tiny_config(), 3, 3, root);
    const Dataset ds = open_dataset(root);
    Image img = read_png(root / ds.rows[1].x_a);
    img.data[0] = img.data[0] > 0.5f ? 0.0f : 1.0f;
    write_png(root / ds.rows[1].x_a, img);
    EXPECT_THROW(validate_dataset(root), std::runtime_error);
    fs::remove_all(root);
}

TEST(Dataset, SamplingCoversSubjects) {
    const DatasetConfig cfg = tiny_config();
    const auto subjects = subject_pool(cfg);
    std::set<int> seen;
    for (int i = 0; i < 100; ++i) seen.insert(sample_tuple_meta(cfg, subjects, i, 7).subject.subject_id);
    EXPECT_GE(seen.size(), 8u);
}

TEST(Dataset, LoadedTupleMatchesRender) {
    const DatasetConfig cfg = tiny_config();
    const fs::path root = scratch("reload");
    build_dataset(cfg, 4, 9, root);
    const Dataset ds = open_dataset(root);
    const auto envs = env_pool(cfg);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const TrainingTuple disk = ds.load(i);
        const TrainingTuple mem = render_from_meta(cfg, envs, disk.meta);
        EXPECT_EQ(disk.x_b.data, mem.x_b.data);
        EXPECT_EQ(disk.y_b.data, mem.y_b.data);
        EXPECT_EQ(disk.m.data, mem.m.data);
    }
    fs::remove_all(root);
}

TEST(EnvGen, DeterministicAndPositive) {
    const EnvGenConfig cfg;
    const EnvMap a = generate_envmap(cfg, 42), b = generate_envmap(cfg, 42);
    EXPECT_EQ(a.pixels().data, b.pixels().data);
    for (float v : a.pixels().data) EXPECT_GE(v, 0.0f);
}
