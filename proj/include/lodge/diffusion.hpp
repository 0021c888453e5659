#pragma once

// Noise schedule, forward process and x0-predicting samplers.

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lodge/rng.hpp"
#include "lodge/tensor.hpp"

namespace lodge::diffusion {

enum class ScheduleKind { cosine, linear };

ScheduleKind parse_schedule_kind(const std::string& s);
std::string to_string(ScheduleKind k);

struct NoiseSchedule {
    long T = 0;
    ScheduleKind kind = ScheduleKind::cosine;
    std::vector<double> betas;      // T
    std::vector<double> alpha_bar;  // T, alpha_bar[t] for t = 0..T-1

    // alpha_bar at t in [-1, T-1]; t = -1 gives exactly 1.
    double abar(long t) const;
    void validate() const;
};

// cosine: alpha_bar from the squared-cosine curve (offset 0.008), betas clipped at 0.999.
// linear: betas evenly spaced in [1e-4, 0.02].
NoiseSchedule make_schedule(long T, ScheduleKind kind = ScheduleKind::cosine);

class SamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// sqrt(abar_t) d0 + sqrt(1 - abar_t) eps; t = -1 returns d0 unchanged.
Mat q_sample(const NoiseSchedule& s, const Mat& d0, long t, const Mat& eps);

// x0-prediction model: (d_t, t) -> d0 estimate. Conditioning is captured by the callable.
using X0Model = std::function<Mat(const Mat& dt, long t)>;

// One ancestral step from t to t-1 using the exact Gaussian posterior.
// Adds sigma_t z for t > 0; at t = 0 returns the prediction.
Mat p_sample_ddpm(const NoiseSchedule& s, const Mat& dt, const Mat& x0_pred, long t, Rng& rng);

// Deterministic (eta = 0) update from t to prev (prev = -1 returns the prediction).
Mat ddim_step(const NoiseSchedule& s, const Mat& dt, const Mat& x0_pred, long t, long prev);

// Timesteps visited by a DDIM sampler with `steps` steps, descending, plus the
// step that follows each one (-1 after the last).
struct TimestepPlan {
    std::vector<long> t;
    std::vector<long> prev;
};
TimestepPlan ddpm_plan(long T);
TimestepPlan ddim_plan(long T, long steps);

// Full chains from start noise d_T. Every intermediate is checked for finiteness.
Mat sample_ddpm(const NoiseSchedule& s, const X0Model& model, Mat start, Rng& rng);
Mat sample_ddim(const NoiseSchedule& s, const X0Model& model, Mat start, long steps);

// kind: "ddpm" (steps ignored) or "ddim".
TimestepPlan make_plan(const std::string& kind, long T, long steps);
Mat run_sampler(const NoiseSchedule& s, const std::string& kind, long steps, const X0Model& model, Mat start, Rng& rng);

void require_finite(const Mat& m, long t, const char* where);

}  // namespace lodge::diffusion
