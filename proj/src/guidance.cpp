#include "lodge/guidance.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "lodge/motion.hpp"
#include "lodge/rng.hpp"

namespace lodge::guidance {

Mat GuidanceSpec::mask(std::size_t j) const {
    Mat m(n, motion::kMotionDim);
    for (std::size_t r = 0; r < n; ++r)
        if (row_mask[j][r]) std::fill(m.row(r).begin(), m.row(r).end(), 1.0);
    return m;
}

void GuidanceSpec::validate() const {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("guidance: s must lie in [0, 1]");
    if (n < 3 * kPrimitiveFrames) throw std::invalid_argument("guidance: segment too short");
    if (row_mask.size() != value.size()) throw std::invalid_argument("guidance: value/mask count mismatch");
    std::vector<std::vector<char>> expect(value.size(), std::vector<char>(n, 0));
    for (std::size_t j = 0; j < value.size(); ++j) {
        require_shape(value[j], n, motion::kMotionDim, "guidance value");
        for (std::size_t r = 0; r < n; ++r)
            if (is_hard_row(r)) expect[j][r] = 1;
    }
    for (const auto& w : soft_windows) {
        if (w.segment >= value.size() || w.start < kHardRows || w.start + kPrimitiveFrames + kHardRows > n) {
            throw std::invalid_argument("guidance: soft window outside the legal span");
        }
        for (std::size_t r = w.start; r < w.start + kPrimitiveFrames; ++r) {
            if (expect[w.segment][r]) throw std::invalid_argument("guidance: overlapping soft windows");
            expect[w.segment][r] = 1;
        }
    }
    if (expect != row_mask) throw std::invalid_argument("guidance: mask disagrees with hard rows and soft windows");
}

GuidanceSpec build_guidance(const PrimitiveSet& ps, double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("guidance strength s must lie in [0, 1]");
    const SegmentLayout& layout = ps.layout;
    layout.validate();
    const std::size_t L = layout.segments(), n = layout.n;
    if (ps.hard.size() != L + 1) {
        throw std::invalid_argument("build_guidance: " + std::to_string(ps.hard.size()) + " hard primitives for " + std::to_string(L) + " segments");
    }
    if (n < 3 * kPrimitiveFrames) throw std::invalid_argument("build_guidance: segments must be at least 24 frames");

    GuidanceSpec g;
    g.n = n;
    g.s = s;
    g.value.assign(L, Mat(n, motion::kMotionDim));
    g.row_mask.assign(L, std::vector<char>(n, 0));

    // Flatten, trim 4 at each end, reshape to L blocks of 8.
    Mat flat(kPrimitiveFrames * (L + 1), motion::kMotionDim);
    for (std::size_t j = 0; j <= L; ++j) {
        require_shape(ps.hard[j].motion, kPrimitiveFrames, motion::kMotionDim, "hard primitive");
        flat.set_rows(j * kPrimitiveFrames, ps.hard[j].motion);
    }
    for (std::size_t b = 0; b < L; ++b) {
        const Mat block = flat.slice_rows(kHalfPrimitive + b * kPrimitiveFrames, kPrimitiveFrames);
        g.value[b].set_rows(0, block.slice_rows(0, kHardRows));
        g.value[b].set_rows(n - kHardRows, block.slice_rows(kHardRows, kHardRows));
    }
    for (std::size_t j = 0; j < L; ++j)
        for (std::size_t r = 0; r < n; ++r)
            if (g.is_hard_row(r)) g.row_mask[j][r] = 1;

    std::vector<std::size_t> order(ps.soft.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ps.soft[a].strength > ps.soft[b].strength; });
    const long lo = static_cast<long>(kHardRows), hi = static_cast<long>(n - kHardRows - kPrimitiveFrames);
    for (std::size_t i : order) {
        const DancePrimitive& p = ps.soft[i];
        require_shape(p.motion, kPrimitiveFrames, motion::kMotionDim, "soft primitive");
        if (p.target_frame < 0 || p.target_frame >= static_cast<long>(L * n)) {
            g.dropped.push_back(i);
            continue;
        }
        const auto seg = static_cast<std::size_t>(p.target_frame) / n;
        const long want = p.target_frame - static_cast<long>(seg * n) - static_cast<long>(kHalfPrimitive);
        auto free_at = [&](long st) {
            for (long r = st; r < st + static_cast<long>(kPrimitiveFrames); ++r)
                if (g.row_mask[seg][static_cast<std::size_t>(r)]) return false;
            return true;
        };
        long chosen = -1;
        for (long d = 0; d <= hi - lo + std::abs(want - lo) + std::abs(want - hi) && chosen < 0; ++d) {
            for (long st : {want - d, want + d}) {
                if (st >= lo && st <= hi && free_at(st)) {
                    chosen = st;
                    break;
                }
            }
        }
        if (chosen < 0) {
            g.dropped.push_back(i);
            std::fprintf(stderr, "warning: soft primitive %zu (frame %ld) has no free span and was dropped\n", i, p.target_frame);
            continue;
        }
        const auto st = static_cast<std::size_t>(chosen);
        g.value[seg].set_rows(st, p.motion);
        for (std::size_t r = st; r < st + kPrimitiveFrames; ++r) g.row_mask[seg][r] = 1;
        g.soft_windows.push_back({seg, st, i});
    }
    std::sort(g.soft_windows.begin(), g.soft_windows.end(), [](const SoftWindow& a, const SoftWindow& b) {
        return a.segment != b.segment ? a.segment < b.segment : a.start < b.start;
    });
    return g;
}

bool soft_active(long t, long T, double s) { return static_cast<double>(t) >= static_cast<double>(T) * (1.0 - s); }

Mat sample_segment(const diffusion::NoiseSchedule& sched, const diffusion::TimestepPlan& plan, const std::string& kind,
                   const SegmentJob& job, const GuidanceSpec* spec, std::size_t segment, std::size_t rows) {
    const bool ddpm = kind == "ddpm";
    if (!ddpm && kind != "ddim") throw std::invalid_argument("unknown sampler '" + kind + "'");
    if (spec) {
        if (segment >= spec->segments() || rows != spec->n) throw std::invalid_argument("sample_segment: spec does not match segment");
        if (!(spec->s >= 0.0 && spec->s <= 1.0)) throw std::invalid_argument("guidance strength s must lie in [0, 1]");
    }
    Rng rng(derive_seed(job.seed, {0}));
    Rng guide_rng(derive_seed(job.seed, {1}));
    Mat x = rng.normal_mat(rows, motion::kMotionDim);
    for (std::size_t i = 0; i < plan.t.size(); ++i) {
        const long t = plan.t[i], prev = plan.prev[i];
        const Mat x0 = job.model(x, t);
        diffusion::require_finite(x0, t, "segment model output");
        x = ddpm ? diffusion::p_sample_ddpm(sched, x, x0, t, rng) : diffusion::ddim_step(sched, x, x0, t, prev);
        if (spec) {
            const Mat& value = spec->value[segment];
            const auto& mask = spec->row_mask[segment];
            if (soft_active(t, sched.T, spec->s)) {
                const Mat noisy = diffusion::q_sample(sched, value, prev, guide_rng.normal_mat(rows, motion::kMotionDim));
                for (std::size_t r = 0; r < rows; ++r)
                    if (mask[r]) std::copy(noisy.row(r).begin(), noisy.row(r).end(), x.row(r).begin());
            }
            for (std::size_t r = 0; r < rows; ++r)
                if (spec->is_hard_row(r)) std::copy(value.row(r).begin(), value.row(r).end(), x.row(r).begin());
        }
        diffusion::require_finite(x, t, "segment sample");
    }
    return x;
}

std::vector<Mat> guided_sample(const diffusion::NoiseSchedule& sched, const std::string& kind, long ddim_steps,
                               const std::vector<SegmentJob>& segments, const GuidanceSpec* spec, std::size_t rows,
                               unsigned jobs) {
    if (spec) {
        spec->validate();
        if (spec->segments() != segments.size()) throw std::invalid_argument("guided_sample: segment count mismatch");
    }
    const diffusion::TimestepPlan plan = diffusion::make_plan(kind, sched.T, ddim_steps);
    std::vector<Mat> out(segments.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto worker = [&] {
        for (std::size_t j = next++; j < segments.size(); j = next++) {
            try {
                out[j] = sample_segment(sched, plan, kind, segments[j], spec, j, rows);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(segments.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
    return out;
}

Mat stitch_segments(const std::vector<Mat>& segments) {
    if (segments.empty()) throw std::invalid_argument("stitch_segments: no segments");
    const std::size_t n = segments.front().rows;
    Mat out(n * segments.size(), segments.front().cols);
    for (std::size_t j = 0; j < segments.size(); ++j) {
        if (segments[j].rows != n || segments[j].cols != out.cols) throw ShapeError("stitch_segments: ragged segments");
        out.set_rows(j * n, segments[j]);
    }
    return out;
}

}  // namespace lodge::guidance
