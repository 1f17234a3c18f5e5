#pragma once

#include <vector>

#include "relharm/nn/layers.hpp"

namespace relharm {

/// Encoder-decoder over lighting features. Encoder: three residual blocks,
/// each followed by a stride-2 convolution. Decoder: three residual blocks,
/// each followed by nearest upsampling back to the matching encoder size and
/// a 3x3 convolution; encoder activations are added back at equal sizes. The
/// output is f + proj(decoder), with proj zero-initialised, so the untrained
/// network is the identity and output shape always equals input shape.
template <class T>
class AlignNet {
public:
    using Tensor = nn::Tensor<T>;
    static constexpr int kDepth = 3;

    AlignNet() = default;
    AlignNet(int channels, nn::Rng& rng) : channels_(channels) {
        for (int i = 0; i < kDepth; ++i) {
            enc_.emplace_back(channels, channels, 0, rng);
            down_.emplace_back(channels, channels, 3, 2, 1, rng);
        }
        for (int i = 0; i < kDepth; ++i) {
            dec_.emplace_back(channels, channels, 0, rng);
            up_.emplace_back(channels, channels, 3, 1, 1, rng);
        }
        out_ = nn::Conv2d<T>(channels, channels, 1, 1, 0, rng, /*zero=*/true);
    }

    int channels() const { return channels_; }

    Tensor operator()(const Tensor& f) const {
        if (f.shape().c != channels_) throw nn::ShapeMismatch("align: feature " + f.shape().str());
        std::vector<Tensor> skips;
        Tensor h = f;
        for (int i = 0; i < kDepth; ++i) {
            h = enc_[i](h);
            skips.push_back(h);
            h = down_[i](h);
        }
        for (int i = 0; i < kDepth; ++i) {
            h = dec_[i](h);
            const Tensor& skip = skips[kDepth - 1 - i];
            h = up_[i](nn::upsample_nearest(h, skip.shape().h, skip.shape().w));
            h = nn::add(h, skip);
        }
        return nn::add(f, out_(h));
    }

    void collect(nn::ParamList<T>& out, const std::string& prefix) const {
        for (int i = 0; i < kDepth; ++i) {
            enc_[i].collect(out, prefix + ".enc" + std::to_string(i));
            down_[i].collect(out, prefix + ".down" + std::to_string(i));
        }
        for (int i = 0; i < kDepth; ++i) {
            dec_[i].collect(out, prefix + ".dec" + std::to_string(i));
            up_[i].collect(out, prefix + ".up" + std::to_string(i));
        }
        out_.collect(out, prefix + ".out");
    }

private:
    int channels_ = 0;
    std::vector<nn::ResBlock<T>> enc_, dec_;
    std::vector<nn::Conv2d<T>> down_, up_;
    nn::Conv2d<T> out_;
};

}  // namespace relharm
