#pragma once

#include <vector>

#include "relharm/diffcore/unet.hpp"
#include "relharm/nn/layers.hpp"

namespace relharm {

/// Trainable copy of the denoiser encoder that turns a lighting feature into
/// one additive residual per encoder level. It sees the noisy target and the
/// timestep; the feature is upsampled to full resolution, projected and added
/// after the input convolution. Every per-level output projection starts at
/// zero, so a fresh branch contributes exactly nothing.
template <class T>
class ConditioningBranch {
public:
    using Tensor = nn::Tensor<T>;

    ConditioningBranch() = default;
    ConditioningBranch(const DenoiserConfig& cfg, int feature_channels, nn::Rng& rng)
        : cfg_(cfg), feature_channels_(feature_channels) {
        cfg.validate();
        time_ = nn::TimeEmbedding<T>(cfg.time_features, cfg.time_dim(), rng);
        conv_in_ = nn::Conv2d<T>(3, cfg.base_channels, 3, 1, 1, rng);
        hint_ = nn::Conv2d<T>(feature_channels, cfg.base_channels, 1, 1, 0, rng);
        int ch = cfg.base_channels;
        for (int l = 0; l < cfg.levels(); ++l) {
            const int out = cfg.level_channels(l);
            std::vector<nn::ResBlock<T>> blocks;
            for (int b = 0; b < cfg.res_blocks; ++b) {
                blocks.emplace_back(ch, out, cfg.time_dim(), rng);
                ch = out;
            }
            blocks_.push_back(std::move(blocks));
            zero_out_.emplace_back(ch, ch, 1, 1, 0, rng, /*zero=*/true);
            if (l + 1 < cfg.levels()) downsample_.emplace_back(ch, ch, 3, 2, 1, rng);
        }
    }

    int levels() const { return cfg_.levels(); }
    int feature_channels() const { return feature_channels_; }

    std::vector<Tensor> operator()(const Tensor& feature, const Tensor& x_t, const std::vector<int>& t) const {
        const int n = x_t.shape().n;
        const int s = cfg_.size;
        nn::expect_shape(x_t.shape(), nn::Shape{n, 3, s, s}, "branch x_t");
        const nn::Shape fs = feature.shape();
        if (fs.n != n || fs.c != feature_channels_) throw nn::ShapeMismatch("branch feature: got " + fs.str());
        const Tensor temb = time_(t);
        Tensor h = nn::add(conv_in_(x_t), hint_(nn::upsample_nearest(feature, s, s)));
        std::vector<Tensor> out;
        for (int l = 0; l < cfg_.levels(); ++l) {
            for (const auto& block : blocks_[l]) h = block(h, temb);
            out.push_back(zero_out_[l](h));
            if (l + 1 < cfg_.levels()) h = downsample_[l](h);
        }
        return out;
    }

    void collect(nn::ParamList<T>& out, const std::string& prefix) const {
        time_.collect(out, prefix + ".time");
        conv_in_.collect(out, prefix + ".conv_in");
        hint_.collect(out, prefix + ".hint");
        for (int l = 0; l < cfg_.levels(); ++l) {
            for (std::size_t b = 0; b < blocks_[l].size(); ++b)
                blocks_[l][b].collect(out, prefix + ".down" + std::to_string(l) + "." + std::to_string(b));
            zero_out_[l].collect(out, prefix + ".zero_out" + std::to_string(l));
            if (l + 1 < cfg_.levels()) downsample_[l].collect(out, prefix + ".downsample" + std::to_string(l));
        }
    }

private:
    DenoiserConfig cfg_;
    int feature_channels_ = 0;
    nn::TimeEmbedding<T> time_;
    nn::Conv2d<T> conv_in_, hint_;
    std::vector<std::vector<nn::ResBlock<T>>> blocks_;
    std::vector<nn::Conv2d<T>> zero_out_;
    std::vector<nn::Conv2d<T>> downsample_;
};

}  // namespace relharm
