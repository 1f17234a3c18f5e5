#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "relharm/envlight.hpp"
#include "relharm/stagesim.hpp"

using namespace relharm;

namespace {

EnvMap random_env(int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 4.0f);
    Image img(3, h, 2 * h);
    for (float& v : img.data) v = u(rng);
    return EnvMap(std::move(img));
}

bool bit_identical(const EnvMap& a, const EnvMap& b) { return a.pixels().data == b.pixels().data; }

}  // namespace

TEST(Rotation, ZeroAndFullTurnAreIdentity) {
    const EnvMap env = random_env(16, 1);
    EXPECT_TRUE(bit_identical(rotate_envmap(env, 0.0), env));
    EXPECT_TRUE(bit_identical(rotate_envmap(env, 2 * kPi), env));
}

TEST(Rotation, HalfTurnShiftsByHalfWidth) {
    const EnvMap env = random_env(16, 2);
    const EnvMap r = rotate_envmap(env, kPi);
    const int w = env.width();
    for (int c = 0; c < 3; ++c)
        for (int v = 0; v < env.height(); ++v)
            for (int u = 0; u < w; ++u) ASSERT_EQ(r.at(c, v, (u + w / 2) % w), env.at(c, v, u));
}

TEST(Rotation, ComposesAdditively) {
    const EnvMap env = random_env(16, 3);
    const double a = 2 * kPi * 5 / 32, b = 2 * kPi * 11 / 32;
    EXPECT_TRUE(bit_identical(rotate_envmap(rotate_envmap(env, a), b), rotate_envmap(env, a + b)));
}

TEST(Rotation, DirectionRotationMatchesMapRotation) {
    const EnvMap env = random_env(32, 4);
    const double yaw = 2 * kPi * 9 / 64;
    const EnvMap r = rotate_envmap(env, yaw);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const Vec3 d = normalize({n(rng), n(rng), n(rng)});
        const auto p = dir_to_equirect(d, 32, 64);
        const auto q = dir_to_equirect(rotate_dir_yaw(d, yaw), 32, 64);
        const Rgb a = r.sample(p.u, p.v), b = env.sample(q.u, q.v);
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(a[c], b[c], 1e-4);
    }
}

TEST(Equirect, ForwardMapsToCentre) {
    const auto p = dir_to_equirect({0, 0, 1}, 32, 64);
    EXPECT_DOUBLE_EQ(p.u, 32.0);
    EXPECT_DOUBLE_EQ(p.v, 16.0);
}

TEST(Equirect, PoleUsesHalfWidth) {
    const auto north = dir_to_equirect({0, 1, 0}, 32, 64);
    EXPECT_DOUBLE_EQ(north.v, 0.0);
    EXPECT_DOUBLE_EQ(north.u, 32.0);
    EXPECT_DOUBLE_EQ(dir_to_equirect({0, -1, 0}, 32, 64).v, 32.0);
}

TEST(Equirect, RandomRoundTrip) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 d = normalize({n(rng), n(rng), n(rng)});
        const auto p = dir_to_equirect(d, 64, 128);
        const Vec3 back = equirect_to_dir(p.u, p.v, 64, 128);
        for (int k = 0; k < 3; ++k) ASSERT_NEAR(back[k], d[k], 1e-5);
    }
}

TEST(Equirect, RejectsNonUnitDirection) {
    EXPECT_THROW(dir_to_equirect({0, 0, 2}, 32, 64), ContractError);
}

TEST(Projection, CentrePixelSamplesPanoramaCentre) {
    const EnvMap env = random_env(32, 7);
    CropSpec crop;
    crop.out_w = crop.out_h = 33;
    const Image bg = project_to_background(env, crop);
    const Rgb want = env.sample(32.0, 16.0);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(bg.at(c, 16, 16), want[c], 1e-6);
}

TEST(Projection, ConstantEnvGivesConstantImage) {
    const EnvMap env = EnvMap::constant(16, {0.25, 0.5, 2.0});
    CropSpec crop{75.0, 0.4, -0.3, 24, 20};
    const Image bg = project_to_background(env, crop);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < bg.height; ++y)
            for (int x = 0; x < bg.width; ++x) ASSERT_FLOAT_EQ(bg.at(c, y, x), c == 0 ? 0.25f : c == 1 ? 0.5f : 2.0f);
}

TEST(Projection, RotatedMapMatchesYawedCamera) {
    const EnvMap env = random_env(64, 8);
    float peak = 0.0f;
    for (float v : env.pixels().data) peak = std::max(peak, v);
    for (int k : {1, 7, 40, 101}) {
        const double alpha = 2 * kPi * k / env.width();
        CropSpec at_zero{70.0, 0.0, 0.2, 48, 48};
        CropSpec yawed = at_zero;
        yawed.yaw = alpha;
        const Image a = project_to_background(rotate_envmap(env, alpha), at_zero);
        const Image b = project_to_background(env, yawed);
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a.data[i], b.data[i], 1e-3 * peak) << "k=" << k;
    }
}

TEST(SolidAngle, SumsToFourPi) {
    const EnvMap env = EnvMap::constant(64, {1, 1, 1});
    double total = 0.0;
    for (int v = 0; v < env.height(); ++v) total += env.texel_solid_angle(v) * env.width();
    EXPECT_NEAR(total / (4 * kPi), 1.0, 0.005);
}

TEST(Irradiance, ConstantEnvIsPiL) {
    const EnvMap env = EnvMap::constant(64, {0.5, 1.0, 3.0});
    for (const Vec3& n : {Vec3{0, 1, 0}, Vec3{0, 0, -1}, normalize({1, -2, 0.5})}) {
        const Rgb e = irradiance(env, n);
        EXPECT_NEAR(e[0] / (kPi * 0.5), 1.0, 0.01);
        EXPECT_NEAR(e[1] / (kPi * 1.0), 1.0, 0.01);
        EXPECT_NEAR(e[2] / (kPi * 3.0), 1.0, 0.01);
    }
}

TEST(Irradiance, SingleTexelIsOneTerm) {
    Image img(3, 32, 64, 0.0f);
    const int tv = 11, tu = 45;
    for (int c = 0; c < 3; ++c) img.at(c, tv, tu) = 7.0f;
    const EnvMap env(std::move(img));
    const Vec3 l = equirect_to_dir(tu + 0.5, tv + 0.5, 32, 64);
    const double dw = env.texel_solid_angle(tv);
    for (const Vec3& n : {l, normalize({0.3, 1, 0}), Vec3{-l[0], -l[1], -l[2]}}) {
        const double want = 7.0 * dw * std::max(0.0, dot(n, l));
        EXPECT_NEAR(irradiance(env, n)[1], want, 1e-9 + 1e-9 * want);
    }
}

TEST(Irradiance, LinearInRadiance) {
    const EnvMap env = random_env(16, 9);
    const Vec3 n = normalize({0.2, 0.4, -1});
    const Rgb a = irradiance(env, n), b = irradiance(env.scaled(2.0), n);
    for (int c = 0; c < 3; ++c) {
        EXPECT_GE(a[c], 0.0);
        EXPECT_NEAR(b[c], 2 * a[c], 1e-9 * a[c]);
    }
}

TEST(Tonemap, RangeAndMonotonicity) {
    EXPECT_EQ(tonemap_value(0.0f), 0.0f);
    EXPECT_GE(tonemap_value(1e6f), 0.999f);
    float prev = 0.0f;
    for (float x = 0.0f; x < 50.0f; x += 0.01f) {
        const float y = tonemap_value(x);
        ASSERT_GE(y, prev);
        ASSERT_LE(y, 1.0f);
        prev = y;
    }
}

TEST(EnvFile, RoundTrip) {
    const EnvMap env = random_env(8, 10);
    const auto path = std::filesystem::temp_directory_path() / "relharm_roundtrip.envm";
    write_envm(path, env);
    EXPECT_TRUE(bit_identical(read_envm(path), env));
    std::filesystem::remove(path);
}

TEST(EnvMapType, RejectsBadShapes) {
    EXPECT_THROW(EnvMap(Image(3, 8, 8)), ContractError);
    EXPECT_THROW(EnvMap(Image(1, 8, 16)), ContractError);
}

TEST(EnvMapType, MirrorFlipsProjection) {
    const EnvMap env = random_env(32, 11);
    CropSpec crop{60.0, 0.0, 0.1, 32, 32};
    const Image a = flip_horizontal(project_to_background(env, crop));
    const Image b = project_to_background(env.mirrored(), crop);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a.data[i], b.data[i], 1e-4);
}
