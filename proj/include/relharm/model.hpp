#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "relharm/diffcore/schedule.hpp"
#include "relharm/diffcore/unet.hpp"
#include "relharm/lightcond/align.hpp"
#include "relharm/lightcond/branch.hpp"
#include "relharm/lightcond/extractor.hpp"

namespace relharm {

enum class StageTag { stage1_bg, stage1_env, align, final, finetuned };

std::string to_string(StageTag s);
StageTag stage_tag_from_string(const std::string& s);

/// Where the lighting feature fed to the conditioning branch comes from.
enum class LightingSource {
    none,                // unconditioned backbone
    background,          // F_bg(y)
    aligned_background,  // align(F_bg(y))
    environment,         // F_env(z)
};

std::string to_string(LightingSource s);
LightingSource lighting_source_from_string(const std::string& s);

/// Lighting source a checkpoint stage is meant to be used with.
LightingSource default_source(StageTag stage);

struct ModelConfig {
    DenoiserConfig denoiser;
    int feature_channels = 32;
    int timesteps = 1000;
    ScheduleKind schedule = ScheduleKind::linear;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    std::uint64_t init_seed = 1;

    ExtractorConfig extractor() const { return {denoiser.size, feature_channels}; }
    NoiseSchedule make_noise_schedule() const { return make_schedule(timesteps, schedule, beta_start, beta_end); }
};

/// All networks of the pipeline. Which of them carry trained weights depends
/// on the stage of the checkpoint they were loaded from.
template <class T>
struct HarmonizerModel {
    using Tensor = nn::Tensor<T>;

    ModelConfig config;
    UNet<T> unet;
    ConditioningBranch<T> branch;
    LightingExtractor<T> f_bg;
    LightingExtractor<T> f_env;
    AlignNet<T> align;

    HarmonizerModel() = default;
    explicit HarmonizerModel(const ModelConfig& cfg) : config(cfg) {
        // one stream per component so adding a component never reshuffles the others
        nn::Rng r_unet(cfg.init_seed * 7 + 1), r_branch(cfg.init_seed * 7 + 2), r_bg(cfg.init_seed * 7 + 3),
            r_env(cfg.init_seed * 7 + 4), r_align(cfg.init_seed * 7 + 5);
        unet = UNet<T>(cfg.denoiser, r_unet);
        branch = ConditioningBranch<T>(cfg.denoiser, cfg.feature_channels, r_branch);
        f_bg = LightingExtractor<T>(cfg.extractor(), r_bg);
        f_env = LightingExtractor<T>(cfg.extractor(), r_env);
        align = AlignNet<T>(cfg.feature_channels, r_align);
        alpha_bar_ = cfg.make_noise_schedule().alpha_bar;
    }

    nn::ParamList<T> unet_params() const { return collect_one(unet, "unet"); }
    nn::ParamList<T> branch_params() const { return collect_one(branch, "branch"); }
    nn::ParamList<T> f_bg_params() const { return collect_one(f_bg, "f_bg"); }
    nn::ParamList<T> f_env_params() const { return collect_one(f_env, "f_env"); }
    nn::ParamList<T> align_params() const { return collect_one(align, "align"); }

    nn::ParamList<T> all_params() const {
        nn::ParamList<T> out;
        for (auto list : {unet_params(), branch_params(), f_bg_params(), f_env_params(), align_params()})
            out.insert(out.end(), list.begin(), list.end());
        return out;
    }

    /// Lighting feature for a batch; `background` and `env_thumb` are [-1,1]
    /// images [n,3,S,S]. The unused one may be undefined.
    Tensor features(LightingSource src, const Tensor& background, const Tensor& env_thumb) const {
        switch (src) {
            case LightingSource::none: return {};
            case LightingSource::background: return f_bg(require(background, "background"));
            case LightingSource::aligned_background: return align(f_bg(require(background, "background")));
            case LightingSource::environment: return f_env(require(env_thumb, "environment thumbnail"));
        }
        return {};
    }

    /// Noise prediction; an undefined feature runs the bare denoiser.
    /// The network output r enters as eps = sqrt(1 - ab) x_t + sqrt(ab) r,
    /// which keeps the implied x0 error bounded at high noise levels.
    Tensor predict_eps(const Tensor& x_t, const std::vector<int>& t, const Tensor& x_a, const Tensor& mask,
                       const Tensor& feature) const {
        Tensor r;
        if (!feature.defined()) {
            r = unet.forward(x_t, t, x_a, mask);
        } else {
            const std::vector<Tensor> residuals = branch(feature, x_t, t);
            r = unet.forward(x_t, t, x_a, mask, &residuals);
        }
        std::vector<T> w_x(t.size()), w_r(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double ab = alpha_bar_.at(static_cast<std::size_t>(t[i]));
            w_x[i] = static_cast<T>(std::sqrt(1.0 - ab));
            w_r[i] = static_cast<T>(std::sqrt(ab));
        }
        return nn::blend_per_sample(x_t, w_x, r, w_r);
    }

private:
    std::vector<double> alpha_bar_;

    template <class Net>
    static nn::ParamList<T> collect_one(const Net& net, const std::string& prefix) {
        nn::ParamList<T> out;
        net.collect(out, prefix);
        return out;
    }

    static const Tensor& require(const Tensor& t, const char* what) {
        if (!t.defined()) throw std::invalid_argument(std::string("lighting feature needs a ") + what);
        return t;
    }
};

}  // namespace relharm
