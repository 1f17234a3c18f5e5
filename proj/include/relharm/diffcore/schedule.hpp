#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace relharm {

enum class ScheduleKind { linear, cosine };

std::string to_string(ScheduleKind k);
ScheduleKind schedule_kind_from_string(const std::string& s);

/// Discrete forward-noising schedule. Index 0 is the clean image:
/// betas[0] = 0, alpha_bar[0] = 1; steps run 1..T.
struct NoiseSchedule {
    int T = 0;
    ScheduleKind kind = ScheduleKind::linear;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bar;

    void validate() const;
};

/// Linear betas run from beta_start at t = 1 to beta_end at t = T. The cosine
/// kind ignores the endpoints.
NoiseSchedule make_schedule(int T, ScheduleKind kind = ScheduleKind::linear, double beta_start = 1e-4,
                            double beta_end = 2e-2);

/// x_t = sqrt(ab) x0 + sqrt(1 - ab) eps for an explicit cumulative alpha.
void q_sample_ab(std::span<const float> x0, double alpha_bar, std::span<const float> eps, std::span<float> out);

/// Forward noising to step t in [1, T].
std::vector<float> q_sample(std::span<const float> x0, int t, std::span<const float> eps, const NoiseSchedule& sched);

}  // namespace relharm
