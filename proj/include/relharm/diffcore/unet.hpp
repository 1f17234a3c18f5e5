#pragma once

#include <optional>
#include <string>
#include <vector>

#include "relharm/nn/layers.hpp"

namespace relharm {

/// Denoiser shape. The input is concat(x_t [3], x_a [3], m [1]).
struct DenoiserConfig {
    int size = 32;
    int base_channels = 16;
    std::vector<int> channel_mult{1, 2, 2};
    int res_blocks = 1;
    int time_features = 32;  // sinusoidal width; the embedding is 4x base

    static constexpr int kInputChannels = 7;
    static constexpr int kOutputChannels = 3;

    int levels() const { return static_cast<int>(channel_mult.size()); }
    int level_channels(int l) const { return base_channels * channel_mult[l]; }
    int level_size(int l) const { return size >> l; }
    int time_dim() const { return 4 * base_channels; }

    void validate() const {
        if (levels() < 3) throw std::invalid_argument("DenoiserConfig: need at least 3 resolution levels");
        if (size % (1 << (levels() - 1)) != 0)
            throw std::invalid_argument("DenoiserConfig: size must be divisible by 2^(levels-1)");
        if (base_channels < 1 || res_blocks < 1 || time_features < 2 || time_features % 2)
            throw std::invalid_argument("DenoiserConfig: bad widths");
    }
};

/// U-shaped noise predictor. Encoder level outputs can receive additive
/// conditioning residuals (one per level) before they are stored as skips.
template <class T>
class UNet {
public:
    using Tensor = nn::Tensor<T>;

    UNet() = default;
    UNet(const DenoiserConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
        cfg.validate();
        time_ = nn::TimeEmbedding<T>(cfg.time_features, cfg.time_dim(), rng);
        conv_in_ = nn::Conv2d<T>(DenoiserConfig::kInputChannels, cfg.base_channels, 3, 1, 1, rng);
        int ch = cfg.base_channels;
        for (int l = 0; l < cfg.levels(); ++l) {
            const int out = cfg.level_channels(l);
            std::vector<nn::ResBlock<T>> blocks;
            for (int b = 0; b < cfg.res_blocks; ++b) {
                blocks.emplace_back(ch, out, cfg.time_dim(), rng);
                ch = out;
            }
            down_blocks_.push_back(std::move(blocks));
            if (l + 1 < cfg.levels()) downsample_.emplace_back(ch, ch, 3, 2, 1, rng);
        }
        mid_ = nn::ResBlock<T>(ch, ch, cfg.time_dim(), rng);
        up_blocks_.resize(cfg.levels());
        upsample_.resize(cfg.levels());
        for (int l = cfg.levels() - 1; l >= 0; --l) {
            const int out = cfg.level_channels(l);
            if (l + 1 < cfg.levels()) upsample_[l] = nn::Conv2d<T>(ch, ch, 3, 1, 1, rng);
            for (int b = 0; b < cfg.res_blocks; ++b) {
                const int in = b == 0 ? ch + out : out;
                up_blocks_[l].emplace_back(in, out, cfg.time_dim(), rng);
            }
            ch = out;
        }
        norm_out_ = nn::GroupNorm<T>(ch, nn::norm_groups(ch));
        conv_out_ = nn::Conv2d<T>(ch, DenoiserConfig::kOutputChannels, 3, 1, 1, rng);
    }

    const DenoiserConfig& config() const { return cfg_; }

    /// Shape of the encoder activation at each level for a batch of n.
    std::vector<nn::Shape> encoder_shapes(int n) const {
        std::vector<nn::Shape> out;
        for (int l = 0; l < cfg_.levels(); ++l)
            out.push_back({n, cfg_.level_channels(l), cfg_.level_size(l), cfg_.level_size(l)});
        return out;
    }

    Tensor forward(const Tensor& x_t, const std::vector<int>& t, const Tensor& x_a, const Tensor& mask,
                   const std::vector<Tensor>* residuals = nullptr) const {
        const int n = x_t.shape().n;
        const int s = cfg_.size;
        nn::expect_shape(x_t.shape(), nn::Shape{n, 3, s, s}, "unet x_t");
        nn::expect_shape(x_a.shape(), nn::Shape{n, 3, s, s}, "unet x_a");
        nn::expect_shape(mask.shape(), nn::Shape{n, 1, s, s}, "unet mask");
        if (static_cast<int>(t.size()) != n) throw nn::ShapeMismatch("unet: timestep count != batch");
        if (residuals) {
            const auto shapes = encoder_shapes(n);
            if (residuals->size() != shapes.size()) throw nn::ShapeMismatch("unet: residual count != levels");
            for (std::size_t l = 0; l < shapes.size(); ++l) nn::expect_shape((*residuals)[l].shape(), shapes[l], "unet residual");
        }

        const Tensor temb = time_(t);
        Tensor h = conv_in_(nn::concat_channels<T>({x_t, x_a, mask}));
        std::vector<Tensor> skips;
        for (int l = 0; l < cfg_.levels(); ++l) {
            for (const auto& block : down_blocks_[l]) h = block(h, temb);
            if (residuals) h = nn::add(h, (*residuals)[l]);
            skips.push_back(h);
            if (l + 1 < cfg_.levels()) h = downsample_[l](h);
        }
        h = mid_(h, temb);
        for (int l = cfg_.levels() - 1; l >= 0; --l) {
            if (l + 1 < cfg_.levels()) {
                const int sz = cfg_.level_size(l);
                h = upsample_[l](nn::upsample_nearest(h, sz, sz));
            }
            h = nn::concat_channels<T>({h, skips[l]});
            for (const auto& block : up_blocks_[l]) h = block(h, temb);
        }
        return conv_out_(nn::silu(norm_out_(h)));
    }

    void collect(nn::ParamList<T>& out, const std::string& prefix) const {
        time_.collect(out, prefix + ".time");
        conv_in_.collect(out, prefix + ".conv_in");
        for (int l = 0; l < cfg_.levels(); ++l) {
            for (std::size_t b = 0; b < down_blocks_[l].size(); ++b)
                down_blocks_[l][b].collect(out, prefix + ".down" + std::to_string(l) + "." + std::to_string(b));
            if (l + 1 < cfg_.levels()) downsample_[l].collect(out, prefix + ".downsample" + std::to_string(l));
        }
        mid_.collect(out, prefix + ".mid");
        for (int l = cfg_.levels() - 1; l >= 0; --l) {
            if (l + 1 < cfg_.levels()) upsample_[l].collect(out, prefix + ".upsample" + std::to_string(l));
            for (std::size_t b = 0; b < up_blocks_[l].size(); ++b)
                up_blocks_[l][b].collect(out, prefix + ".up" + std::to_string(l) + "." + std::to_string(b));
        }
        norm_out_.collect(out, prefix + ".norm_out");
        conv_out_.collect(out, prefix + ".conv_out");
    }

private:
    DenoiserConfig cfg_;
    nn::TimeEmbedding<T> time_;
    nn::Conv2d<T> conv_in_;
    std::vector<std::vector<nn::ResBlock<T>>> down_blocks_;
    std::vector<nn::Conv2d<T>> downsample_;
    nn::ResBlock<T> mid_;
    std::vector<std::vector<nn::ResBlock<T>>> up_blocks_;
    std::vector<nn::Conv2d<T>> upsample_;
    nn::GroupNorm<T> norm_out_;
    nn::Conv2d<T> conv_out_;
};

}  // namespace relharm
