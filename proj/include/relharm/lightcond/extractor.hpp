#pragma once

#include "relharm/nn/layers.hpp"

namespace relharm {

struct ExtractorConfig {
    int input_size = 32;
    int channels = 32;  // C, the lighting feature depth

    int grid() const { return input_size / 8; }
    void validate() const {
        if (input_size % 8 != 0 || input_size < 8) throw std::invalid_argument("ExtractorConfig: size must be a multiple of 8");
        if (channels < 2 || channels % 2) throw std::invalid_argument("ExtractorConfig: channels must be even");
    }
};

/// Four-layer CNN mapping a [-1,1] image [n,3,S,S] to a lighting feature
/// [n,C,S/8,S/8]. Three stride-2 convolutions do the 8x reduction; SiLU
/// between layers, none after the last.
template <class T>
class LightingExtractor {
public:
    using Tensor = nn::Tensor<T>;

    LightingExtractor() = default;
    LightingExtractor(const ExtractorConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
        cfg.validate();
        const int c = cfg.channels;
        layers_[0] = nn::Conv2d<T>(3, c / 2, 3, 2, 1, rng);
        layers_[1] = nn::Conv2d<T>(c / 2, c, 3, 2, 1, rng);
        layers_[2] = nn::Conv2d<T>(c, c, 3, 2, 1, rng);
        layers_[3] = nn::Conv2d<T>(c, c, 3, 1, 1, rng);
    }

    const ExtractorConfig& config() const { return cfg_; }

    nn::Shape feature_shape(int n) const { return {n, cfg_.channels, cfg_.grid(), cfg_.grid()}; }

    Tensor operator()(const Tensor& image) const {
        const int n = image.shape().n;
        nn::expect_shape(image.shape(), nn::Shape{n, 3, cfg_.input_size, cfg_.input_size}, "extractor input");
        Tensor h = image;
        for (int i = 0; i < 3; ++i) h = nn::silu(layers_[i](h));
        return layers_[3](h);
    }

    void collect(nn::ParamList<T>& out, const std::string& prefix) const {
        for (int i = 0; i < 4; ++i) layers_[i].collect(out, prefix + ".conv" + std::to_string(i));
    }

private:
    ExtractorConfig cfg_;
    nn::Conv2d<T> layers_[4];
};

}  // namespace relharm
