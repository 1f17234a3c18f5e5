#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "relharm/nn/ops.hpp"

namespace relharm::nn {

template <class T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

using Rng = std::mt19937_64;

template <class T>
std::vector<T> uniform_init(std::size_t count, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> v(count);
    for (T& x : v) x = static_cast<T>(dist(rng));
    return v;
}

template <class T>
void set_trainable(const ParamList<T>& params, bool on) {
    for (const auto& p : params) p.tensor.node()->requires_grad = on;
}

template <class T>
struct Conv2d {
    Tensor<T> weight, bias;
    int stride = 1, pad = 0;

    Conv2d() = default;
    /// Uniform(+-1/sqrt(fan_in)) init; `zero` gives an all-zero layer.
    Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng, bool zero = false) : stride(stride_), pad(pad_) {
        const Shape ws{cout, cin, k, k};
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        weight = Tensor<T>::parameter(ws, zero ? std::vector<T>(ws.numel(), T(0)) : uniform_init<T>(ws.numel(), bound, rng));
        bias = Tensor<T>::parameter(Shape{1, cout, 1, 1},
                                    zero ? std::vector<T>(cout, T(0)) : uniform_init<T>(cout, bound, rng));
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <class T>
struct Linear {
    Tensor<T> weight, bias;

    Linear() = default;
    Linear(int in, int out, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        weight = Tensor<T>::parameter(Shape{out, in, 1, 1}, uniform_init<T>(static_cast<std::size_t>(out) * in, bound, rng));
        bias = Tensor<T>::parameter(Shape{1, out, 1, 1}, uniform_init<T>(out, bound, rng));
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <class T>
struct GroupNorm {
    Tensor<T> gamma, beta;
    int groups = 1;

    GroupNorm() = default;
    GroupNorm(int channels, int groups_) : groups(groups_) {
        gamma = Tensor<T>::parameter(Shape{1, channels, 1, 1}, std::vector<T>(channels, T(1)));
        beta = Tensor<T>::parameter(Shape{1, channels, 1, 1}, std::vector<T>(channels, T(0)));
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return group_norm(x, gamma, beta, groups); }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

/// Largest group count <= preferred that divides the channel count.
inline int norm_groups(int channels, int preferred = 8) {
    int g = std::min(preferred, channels);
    while (channels % g != 0) --g;
    return g;
}

/// Pre-activation residual block: GN-SiLU-conv, optional per-channel time
/// bias, GN-SiLU-conv, plus a 1x1 projection when channel counts differ.
template <class T>
struct ResBlock {
    GroupNorm<T> norm1, norm2;
    Conv2d<T> conv1, conv2, skip;
    Linear<T> time_proj;
    bool has_time = false;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(int cin, int cout, int time_dim, Rng& rng)
        : norm1(cin, norm_groups(cin)),
          norm2(cout, norm_groups(cout)),
          conv1(cin, cout, 3, 1, 1, rng),
          conv2(cout, cout, 3, 1, 1, rng),
          has_time(time_dim > 0),
          has_skip(cin != cout) {
        if (has_time) time_proj = Linear<T>(time_dim, cout, rng);
        if (has_skip) skip = Conv2d<T>(cin, cout, 1, 1, 0, rng);
    }

    /// `temb` is the already-activated time embedding [n, time_dim, 1, 1].
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& temb = {}) const {
        Tensor<T> h = conv1(silu(norm1(x)));
        if (has_time) h = add_channel_bias(h, time_proj(temb));
        h = conv2(silu(norm2(h)));
        return add(has_skip ? skip(x) : x, h);
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        norm1.collect(out, prefix + ".norm1");
        conv1.collect(out, prefix + ".conv1");
        if (has_time) time_proj.collect(out, prefix + ".time_proj");
        norm2.collect(out, prefix + ".norm2");
        conv2.collect(out, prefix + ".conv2");
        if (has_skip) skip.collect(out, prefix + ".skip");
    }
};

/// Sinusoidal timestep features [n, dim, 1, 1]: sin(t f_i) then cos(t f_i),
/// f_i = 10000^(-i / (dim/2)).
template <class T>
Tensor<T> timestep_features(const std::vector<int>& t, int dim) {
    const int half = dim / 2;
    std::vector<T> v(t.size() * static_cast<std::size_t>(dim), T(0));
    for (std::size_t n = 0; n < t.size(); ++n)
        for (int i = 0; i < half; ++i) {
            const double f = std::exp(-std::log(10000.0) * i / half);
            v[n * dim + i] = static_cast<T>(std::sin(t[n] * f));
            v[n * dim + half + i] = static_cast<T>(std::cos(t[n] * f));
        }
    return Tensor<T>::from(Shape{static_cast<int>(t.size()), dim, 1, 1}, std::move(v));
}

/// Sinusoidal features -> Linear -> SiLU -> Linear -> SiLU.
template <class T>
struct TimeEmbedding {
    Linear<T> fc1, fc2;
    int feature_dim = 0;

    TimeEmbedding() = default;
    TimeEmbedding(int feature_dim_, int dim, Rng& rng)
        : fc1(feature_dim_, dim, rng), fc2(dim, dim, rng), feature_dim(feature_dim_) {}

    Tensor<T> operator()(const std::vector<int>& t) const {
        return silu(fc2(silu(fc1(timestep_features<T>(t, feature_dim)))));
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        fc1.collect(out, prefix + ".fc1");
        fc2.collect(out, prefix + ".fc2");
    }
};

}  // namespace relharm::nn
