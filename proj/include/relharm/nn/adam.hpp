#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relharm/nn/layers.hpp"

namespace relharm::nn {

struct AdamOptions {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer over an explicit parameter set. Parameters
/// outside the set are never touched, which is how stage freezing is done.
template <class T>
class Adam {
public:
    struct Moments {
        std::vector<T> m, v;
    };

    Adam(ParamList<T> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
        for (const auto& p : params_) state_[p.name] = {std::vector<T>(p.tensor.numel(), T(0)), std::vector<T>(p.tensor.numel(), T(0))};
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        for (auto& p : params_) {
            if (!p.tensor.has_grad()) continue;
            Moments& s = state_[p.name];
            auto& w = p.tensor.values();
            const auto& g = p.tensor.grad();
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = g[i];
                const double m = opt_.beta1 * s.m[i] + (1.0 - opt_.beta1) * gi;
                const double v = opt_.beta2 * s.v[i] + (1.0 - opt_.beta2) * gi * gi;
                s.m[i] = static_cast<T>(m);
                s.v[i] = static_cast<T>(v);
                w[i] = static_cast<T>(w[i] - opt_.lr * (m / bc1) / (std::sqrt(v / bc2) + opt_.eps));
            }
        }
    }

    const ParamList<T>& params() const { return params_; }
    std::int64_t steps() const { return t_; }
    void set_steps(std::int64_t t) { t_ = t; }
    std::map<std::string, Moments>& state() { return state_; }
    const std::map<std::string, Moments>& state() const { return state_; }
    AdamOptions& options() { return opt_; }

private:
    ParamList<T> params_;
    AdamOptions opt_;
    std::map<std::string, Moments> state_;
    std::int64_t t_ = 0;
};

}  // namespace relharm::nn
