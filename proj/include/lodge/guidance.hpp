#pragma once

// Hard/soft diffusion guidance for parallel segment sampling.
//
// Each n-frame segment has its first and last 4 rows pinned to halves of the
// hard primitives (clean values at every step) and a set of 8-frame soft
// windows that are blended in, re-noised to the current level, during the
// first T*s steps of the reverse process.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lodge/diffusion.hpp"
#include "lodge/primitives.hpp"

namespace lodge::guidance {

inline constexpr std::size_t kHardRows = kHalfPrimitive;

struct SoftWindow {
    std::size_t segment = 0;
    std::size_t start = 0;       // first local row, within [4, n-12]
    std::size_t primitive = 0;   // index into PrimitiveSet::soft
};

struct GuidanceSpec {
    std::size_t n = 0;
    double s = 1.0;
    std::vector<Mat> value;                   // per segment, n x 139
    std::vector<std::vector<char>> row_mask;  // per segment, n rows in {0,1}
    std::vector<SoftWindow> soft_windows;
    std::vector<std::size_t> dropped;         // soft primitives with no legal span

    std::size_t segments() const { return value.size(); }
    bool is_hard_row(std::size_t r) const { return r < kHardRows || r + kHardRows >= n; }
    // Full n x 139 mask of segment j (rows broadcast over channels).
    Mat mask(std::size_t j) const;
    // mask = 1 exactly on hard rows and soft windows; windows legal and disjoint.
    void validate() const;
};

// Hard primitives are flattened to (L+1)*8 frames, trimmed by 4 at both ends
// and cut into L blocks; block j gives the first and last 4 rows of segment j,
// so the junction between j and j+1 is hard primitive j+1 intact. Soft primitives are placed in descending
// strength order at [b-4, b+4) of their segment; a window that is illegal or
// collides moves to the nearest free legal span of that segment, else it is dropped.
GuidanceSpec build_guidance(const PrimitiveSet& ps, double s);

// Soft guidance is active at timestep t when t >= T * (1 - s).
bool soft_active(long t, long T, double s);

struct SegmentJob {
    diffusion::X0Model model;  // conditioning captured
    std::uint64_t seed = 0;
};

enum class Mode { guided, unguided };

// Runs one segment. Start noise and sampler noise come from seed; the
// re-noising of soft values uses a separate stream so that unguided and
// guided runs consume identical sampler noise.
Mat sample_segment(const diffusion::NoiseSchedule& sched, const diffusion::TimestepPlan& plan, const std::string& kind,
                   const SegmentJob& job, const GuidanceSpec* spec, std::size_t segment, std::size_t rows);

// All segments, on up to `jobs` threads. Results do not depend on `jobs`.
std::vector<Mat> guided_sample(const diffusion::NoiseSchedule& sched, const std::string& kind, long ddim_steps,
                               const std::vector<SegmentJob>& segments, const GuidanceSpec* spec, std::size_t rows,
                               unsigned jobs);

Mat stitch_segments(const std::vector<Mat>& segments);

}  // namespace lodge::guidance
