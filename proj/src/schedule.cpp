#include "relharm/diffcore/schedule.hpp"

namespace relharm {

std::string to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    throw std::invalid_argument("unknown schedule kind: " + s);
}

void NoiseSchedule::validate() const {
    if (T < 10) throw std::invalid_argument("schedule: T must be >= 10");
    if (static_cast<int>(alpha_bar.size()) != T + 1) throw std::invalid_argument("schedule: table size mismatch");
    if (alpha_bar[0] != 1.0) throw std::invalid_argument("schedule: alpha_bar[0] must be 1");
    for (int t = 1; t <= T; ++t) {
        if (!(betas[t] > 0.0 && betas[t] < 1.0)) throw std::invalid_argument("schedule: beta out of (0,1)");
        if (!(alpha_bar[t] < alpha_bar[t - 1])) throw std::invalid_argument("schedule: alpha_bar not decreasing");
    }
}

NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_start, double beta_end) {
    if (T < 10) throw std::invalid_argument("make_schedule: T must be >= 10");
    NoiseSchedule s;
    s.T = T;
    s.kind = kind;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.assign(T + 1, 0.0);
    if (kind == ScheduleKind::linear) {
        for (int t = 1; t <= T; ++t) s.betas[t] = beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    } else {
        constexpr double offset = 0.008;
        auto f = [&](double t) {
            const double c = std::cos((t / T + offset) / (1.0 + offset) * 3.14159265358979323846 / 2.0);
            return c * c;
        };
        for (int t = 1; t <= T; ++t) s.betas[t] = std::min(1.0 - f(t) / f(t - 1), 0.999);
    }
    s.alphas.assign(T + 1, 1.0);
    s.alpha_bar.assign(T + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        s.alphas[t] = 1.0 - s.betas[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alphas[t];
    }
    s.validate();
    return s;
}

void q_sample_ab(std::span<const float> x0, double alpha_bar, std::span<const float> eps, std::span<float> out) {
    if (x0.size() != eps.size() || out.size() != x0.size()) throw std::invalid_argument("q_sample: size mismatch");
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
}

std::vector<float> q_sample(std::span<const float> x0, int t, std::span<const float> eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw std::out_of_range("q_sample: t must lie in [1, T]");
    std::vector<float> out(x0.size());
    q_sample_ab(x0, sched.alpha_bar[t], eps, out);
    return out;
}

}  // namespace relharm
