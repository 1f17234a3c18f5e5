#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "relharm/diffcore/schedule.hpp"
#include "relharm/model.hpp"

namespace relharm {

enum class SamplerMode { ddpm, ddim };

std::string to_string(SamplerMode m);
SamplerMode sampler_mode_from_string(const std::string& s);

struct SamplerParams {
    SamplerMode mode = SamplerMode::ddim;
    int steps = 20;
    std::uint64_t seed = 0;
};

class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError() : std::runtime_error("non-finite activations") {}
};

/// Descending timesteps T, T - T/steps, ... used by the strided samplers.
std::vector<int> sampling_timesteps(int T, int steps);

/// Reverse diffusion with a generic noise predictor `eps_fn(x_t, t)`.
/// DDIM is the deterministic eta = 0 update; DDPM is the ancestral eta = 1
/// update over the same (possibly strided) timesteps. x0 estimates are
/// clamped to [-1,1] and the result is clamped too.
template <class T, class EpsFn>
std::vector<T> reverse_diffusion(EpsFn&& eps_fn, const NoiseSchedule& sched, std::size_t count, const SamplerParams& p) {
    if (p.steps < 1 || p.steps > sched.T) throw std::invalid_argument("sample: steps must lie in [1, T]");
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<T> x(count);
    for (T& v : x) v = static_cast<T>(normal(rng));

    const double eta = p.mode == SamplerMode::ddim ? 0.0 : 1.0;
    const std::vector<int> ts = sampling_timesteps(sched.T, p.steps);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const int t = ts[k];
        const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
        const double ab = sched.alpha_bar[t], ab_prev = sched.alpha_bar[t_prev];
        const std::vector<T> eps = eps_fn(x, t);
        for (T v : eps)
            if (!std::isfinite(static_cast<double>(v))) throw NonFiniteError();
        const double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
        const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
        for (std::size_t i = 0; i < count; ++i) {
            const double x0 = std::clamp((x[i] - std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(ab), -1.0, 1.0);
            const double e = (x[i] - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
            double next = std::sqrt(ab_prev) * x0 + dir * e;
            if (sigma > 0.0) next += sigma * normal(rng);
            x[i] = static_cast<T>(next);
        }
    }
    for (T& v : x) {
        if (!std::isfinite(static_cast<double>(v))) throw NonFiniteError();
        v = std::clamp(v, T(-1), T(1));
    }
    return x;
}

/// Samples x^b given the composite, mask and an (optional) lighting feature,
/// all batched [n, ...]. Inputs in [-1,1]; output [n,3,S,S] in [-1,1].
template <class T>
nn::Tensor<T> sample(const HarmonizerModel<T>& model, const NoiseSchedule& sched, const nn::Tensor<T>& x_a,
                     const nn::Tensor<T>& mask, const nn::Tensor<T>& feature, const SamplerParams& p) {
    nn::NoGradGuard no_grad;
    const nn::Shape shape = x_a.shape();
    auto eps_fn = [&](const std::vector<T>& x, int t) {
        const auto x_t = nn::Tensor<T>::from(shape, x);
        return model.predict_eps(x_t, std::vector<int>(shape.n, t), x_a, mask, feature).values();
    };
    return nn::Tensor<T>::from(shape, reverse_diffusion<T>(eps_fn, sched, shape.numel(), p));
}

}  // namespace relharm
