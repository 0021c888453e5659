#include "lodge/diffusion.hpp"

#include <cmath>
#include <numbers>

namespace lodge::diffusion {

ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "cosine") return ScheduleKind::cosine;
    if (s == "linear") return ScheduleKind::linear;
    throw std::invalid_argument("unknown schedule kind '" + s + "'");
}

std::string to_string(ScheduleKind k) { return k == ScheduleKind::cosine ? "cosine" : "linear"; }

double NoiseSchedule::abar(long t) const {
    if (t == -1) return 1.0;
    if (t < -1 || t >= T) throw std::out_of_range("timestep " + std::to_string(t) + " outside [-1, " + std::to_string(T - 1) + "]");
    return alpha_bar[static_cast<std::size_t>(t)];
}

void NoiseSchedule::validate() const {
    if (T < 1 || alpha_bar.size() != static_cast<std::size_t>(T)) throw std::invalid_argument("schedule: bad length");
    double prev = 1.0;
    for (double a : alpha_bar) {
        if (!(a > 0.0) || !(a < prev) || !(a <= 1.0)) throw std::invalid_argument("schedule: alpha_bar must decrease strictly in (0, 1]");
        prev = a;
    }
}

NoiseSchedule make_schedule(long T, ScheduleKind kind) {
    if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
    NoiseSchedule s;
    s.T = T;
    s.kind = kind;
    const auto n = static_cast<std::size_t>(T);
    s.betas.resize(n);
    if (kind == ScheduleKind::linear) {
        for (std::size_t i = 0; i < n; ++i) {
            s.betas[i] = T == 1 ? 1e-4 : 1e-4 + (0.02 - 1e-4) * static_cast<double>(i) / static_cast<double>(T - 1);
        }
    } else {
        constexpr double off = 0.008;
        auto f = [&](double t) {
            const double c = std::cos((t / static_cast<double>(T) + off) / (1.0 + off) * std::numbers::pi / 2.0);
            return c * c;
        };
        for (std::size_t i = 0; i < n; ++i) {
            const double b = 1.0 - f(static_cast<double>(i + 1)) / f(static_cast<double>(i));
            s.betas[i] = std::min(b, 0.999);
        }
    }
    s.alpha_bar.resize(n);
    double a = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        a *= 1.0 - s.betas[i];
        s.alpha_bar[i] = a;
    }
    s.validate();
    return s;
}

Mat q_sample(const NoiseSchedule& s, const Mat& d0, long t, const Mat& eps) {
    require_shape(eps, d0.rows, d0.cols, "q_sample eps");
    if (t == -1) {
        s.abar(t);
        return d0;
    }
    const double a = s.abar(t);
    const double ca = std::sqrt(a), cn = std::sqrt(1.0 - a);
    Mat out(d0.rows, d0.cols);
    for (std::size_t i = 0; i < d0.size(); ++i) out.data[i] = ca * d0.data[i] + cn * eps.data[i];
    return out;
}

void require_finite(const Mat& m, long t, const char* where) {
    if (!all_finite(m)) throw SamplingError(std::string(where) + ": non-finite values at step t=" + std::to_string(t));
}

Mat p_sample_ddpm(const NoiseSchedule& s, const Mat& dt, const Mat& x0_pred, long t, Rng& rng) {
    if (t < 0 || t >= s.T) throw std::out_of_range("p_sample_ddpm: t=" + std::to_string(t));
    require_shape(x0_pred, dt.rows, dt.cols, "p_sample_ddpm");
    if (t == 0) return x0_pred;
    const double a = s.abar(t), ap = s.abar(t - 1);
    const double beta = 1.0 - a / ap;
    const double c0 = std::sqrt(ap) * beta / (1.0 - a);
    const double ct = std::sqrt(1.0 - beta) * (1.0 - ap) / (1.0 - a);
    const double sigma = std::sqrt(beta * (1.0 - ap) / (1.0 - a));
    Mat out(dt.rows, dt.cols);
    for (std::size_t i = 0; i < dt.size(); ++i) out.data[i] = c0 * x0_pred.data[i] + ct * dt.data[i] + sigma * rng.normal();
    return out;
}

Mat ddim_step(const NoiseSchedule& s, const Mat& dt, const Mat& x0_pred, long t, long prev) {
    require_shape(x0_pred, dt.rows, dt.cols, "ddim_step");
    if (prev >= t) throw std::invalid_argument("ddim_step: prev must precede t");
    if (prev == -1) return x0_pred;
    const double a = s.abar(t), ap = s.abar(prev);
    const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
    const double sap = std::sqrt(ap), snp = std::sqrt(1.0 - ap);
    Mat out(dt.rows, dt.cols);
    for (std::size_t i = 0; i < dt.size(); ++i) {
        const double eps = (dt.data[i] - sa * x0_pred.data[i]) / sn;
        out.data[i] = sap * x0_pred.data[i] + snp * eps;
    }
    return out;
}

TimestepPlan ddpm_plan(long T) {
    TimestepPlan p;
    for (long t = T - 1; t >= 0; --t) {
        p.t.push_back(t);
        p.prev.push_back(t - 1);
    }
    return p;
}

TimestepPlan ddim_plan(long T, long steps) {
    if (steps < 1 || steps > T) throw std::invalid_argument("ddim steps must be in [1, T]");
    std::vector<long> ts;
    for (long i = 0; i < steps; ++i) ts.push_back(i * T / steps);
    TimestepPlan p;
    for (long i = steps - 1; i >= 0; --i) {
        p.t.push_back(ts[static_cast<std::size_t>(i)]);
        p.prev.push_back(i == 0 ? -1 : ts[static_cast<std::size_t>(i - 1)]);
    }
    return p;
}

Mat sample_ddpm(const NoiseSchedule& s, const X0Model& model, Mat x, Rng& rng) {
    for (long t = s.T - 1; t >= 0; --t) {
        const Mat x0 = model(x, t);
        require_finite(x0, t, "ddpm model output");
        x = p_sample_ddpm(s, x, x0, t, rng);
        require_finite(x, t, "ddpm sample");
    }
    return x;
}

Mat sample_ddim(const NoiseSchedule& s, const X0Model& model, Mat x, long steps) {
    const TimestepPlan plan = ddim_plan(s.T, steps);
    for (std::size_t i = 0; i < plan.t.size(); ++i) {
        const Mat x0 = model(x, plan.t[i]);
        require_finite(x0, plan.t[i], "ddim model output");
        x = ddim_step(s, x, x0, plan.t[i], plan.prev[i]);
        require_finite(x, plan.t[i], "ddim sample");
    }
    return x;
}

TimestepPlan make_plan(const std::string& kind, long T, long steps) {
    if (kind == "ddpm") return ddpm_plan(T);
    if (kind == "ddim") return ddim_plan(T, steps);
    throw std::invalid_argument("unknown sampler '" + kind + "'");
}

Mat run_sampler(const NoiseSchedule& s, const std::string& kind, long steps, const X0Model& model, Mat start, Rng& rng) {
    if (kind == "ddpm") return sample_ddpm(s, model, std::move(start), rng);
    if (kind == "ddim") return sample_ddim(s, model, std::move(start), steps);
    throw std::invalid_argument("unknown sampler '" + kind + "'");
}

}  // namespace lodge::diffusion
