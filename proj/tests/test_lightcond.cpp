#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "relharm/lightcond/features.hpp"
#include "relharm/model.hpp"
#include "relharm/nn/adam.hpp"

using namespace relharm;

namespace {

nn::Tensor<float> random_tensor(nn::Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<float> v(s.numel());
    for (float& x : v) x = static_cast<float>(u(rng));
    return nn::Tensor<float>::from(s, std::move(v));
}

}  // namespace

TEST(Extractor, ShapeContract) {
    nn::Rng rng(1);
    const LightingExtractor<float> f({64, 64}, rng);
    std::mt19937_64 r(2);
    nn::NoGradGuard ng;
    const auto out = f(random_tensor({2, 3, 64, 64}, r));
    EXPECT_EQ(out.shape(), (nn::Shape{2, 64, 8, 8}));
    EXPECT_THROW(f(random_tensor({1, 3, 32, 32}, r)), nn::ShapeMismatch);
}

TEST(Extractor, DeterministicAndFinite) {
    nn::Rng rng(3);
    const LightingExtractor<float> f({32, 16}, rng);
    std::mt19937_64 r(4);
    const auto x = random_tensor({1, 3, 32, 32}, r);
    nn::NoGradGuard ng;
    const auto a = f(x), b = f(x);
    EXPECT_EQ(a.values(), b.values());
    for (float v : a.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Extractor, SeparateWeightsForBackgroundAndEnvironment) {
    ModelConfig cfg;
    const HarmonizerModel<float> m(cfg);
    EXPECT_NE(m.f_bg_params()[0].tensor.values(), m.f_env_params()[0].tensor.values());
}

TEST(Align, PreservesShapeForAnyConfig) {
    for (int grid : {1, 2, 4, 5, 8})
        for (int c : {4, 16}) {
            nn::Rng rng(5);
            const AlignNet<float> a(c, rng);
            std::mt19937_64 r(6);
            nn::NoGradGuard ng;
            const auto f = random_tensor({2, c, grid, grid}, r);
            EXPECT_EQ(a(f).shape(), f.shape()) << grid << "x" << c;
        }
}

TEST(Align, UntrainedNetworkIsIdentity) {
    nn::Rng rng(7);
    const AlignNet<float> a(8, rng);
    std::mt19937_64 r(8);
    const auto f = random_tensor({1, 8, 4, 4}, r);
    nn::NoGradGuard ng;
    EXPECT_EQ(a(f).values(), f.values());
}

TEST(Align, LearnsIdentityFromPerturbedStart) {
    nn::Rng rng(9);
    const AlignNet<float> a(8, rng);
    nn::ParamList<float> params;
    a.collect(params, "align");
    // move away from the identity first
    std::mt19937_64 r(10);
    for (auto& p : params)
        for (float& w : p.tensor.values()) w += static_cast<float>(std::uniform_real_distribution<double>(-0.05, 0.05)(r));
    const auto held_out = random_tensor({4, 8, 4, 4}, r);
    auto l1 = [&](const nn::Tensor<float>& f) {
        nn::NoGradGuard ng;
        return nn::l1_loss(a(f), f.values()).values()[0];
    };
    const double before = l1(held_out);
    nn::Adam<float> opt(params, {2e-3});
    for (int step = 0; step < 600; ++step) {
        if (step == 400) opt.options().lr = 2e-4;
        const auto f = random_tensor({8, 8, 4, 4}, r);
        const auto loss = nn::l1_loss(a(f), f.values());
        opt.zero_grad();
        nn::backward(loss);
        opt.step();
    }
    const double after = l1(held_out);
    EXPECT_GT(before, 1e-2);
    EXPECT_LT(after, 1e-3);
}

TEST(NormMap, ZeroFeatureGivesZeroMap) {
    const auto f = nn::Tensor<float>::zeros({1, 6, 3, 3});
    for (float v : feature_norm_map(f).data) EXPECT_EQ(v, 0.0f);
}

TEST(NormMap, OneHotCellGivesSingleNonzero) {
    auto f = nn::Tensor<float>::zeros({1, 6, 4, 4});
    f.values()[3 * 16 + 2 * 4 + 1] = -2.5f;
    const Image map = feature_norm_map(f);
    int nonzero = 0;
    for (float v : map.data) nonzero += v != 0.0f;
    EXPECT_EQ(nonzero, 1);
    EXPECT_FLOAT_EQ(map.at(0, 2, 1), 1.0f);
}

TEST(NormMap, FeatureFileRoundTrip) {
    std::mt19937_64 r(11);
    const auto f = random_tensor({1, 5, 3, 4}, r);
    const auto path = std::filesystem::temp_directory_path() / "relharm_feature.feat";
    write_feature(path, f);
    const auto g = read_feature(path);
    EXPECT_EQ(g.shape(), f.shape());
    EXPECT_EQ(g.values(), f.values());
    std::filesystem::remove(path);
}
