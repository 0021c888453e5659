#include <doctest.h>

#include <set>

#include "lodge/dataset.hpp"
#include "lodge/global_stage.hpp"
#include "lodge/guidance.hpp"
#include "support.hpp"

using namespace lodge;
using namespace lodge::guidance;

namespace {

// Hard primitive j has every value equal to 1000 j + row, so any misplaced row is visible.
PrimitiveSet tagged_set(const SegmentLayout& layout, std::vector<long> soft_targets = {}) {
    PrimitiveSet ps;
    ps.layout = layout;
    for (std::size_t j = 0; j <= layout.segments(); ++j) {
        DancePrimitive p;
        p.kind = PrimitiveKind::hard;
        p.target_frame = static_cast<long>(j * layout.n);
        p.motion = Mat(kPrimitiveFrames, motion::kMotionDim);
        for (std::size_t r = 0; r < kPrimitiveFrames; ++r)
            for (double& v : p.motion.row(r)) v = 1000.0 * static_cast<double>(j) + static_cast<double>(r);
        ps.hard.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < soft_targets.size(); ++i) {
        DancePrimitive p;
        p.kind = PrimitiveKind::soft;
        p.target_frame = soft_targets[i];
        p.strength = 1.0 - 0.01 * static_cast<double>(i);
        p.motion = Mat(kPrimitiveFrames, motion::kMotionDim, -1.0 - static_cast<double>(i));
        ps.soft.push_back(std::move(p));
    }
    ps.sort_soft();
    return ps;
}

// Frame-local x0 model: each output row depends only on the same input row.
diffusion::X0Model frame_local(double gain) {
    return [gain](const Mat& x, long t) {
        Mat out(x.rows, x.cols);
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = gain * x.data[i] + 0.001 * static_cast<double>(t);
        return out;
    };
}

// A model that mixes rows, so guidance anywhere changes the whole segment.
diffusion::X0Model row_mixing() {
    return [](const Mat& x, long) {
        Mat out(x.rows, x.cols);
        for (std::size_t c = 0; c < x.cols; ++c) {
            double m = 0;
            for (std::size_t r = 0; r < x.rows; ++r) m += x(r, c) / static_cast<double>(x.rows);
            for (std::size_t r = 0; r < x.rows; ++r) out(r, c) = 0.5 * x(r, c) + 0.5 * m;
        }
        return out;
    };
}

}  // namespace

TEST_CASE("junction windows reconstruct the hard primitives (l = 4, n = 256)") {
    const SegmentLayout layout{1024, 256, 1};
    const PrimitiveSet ps = tagged_set(layout);
    const GuidanceSpec g = build_guidance(ps, 1.0);
    REQUIRE(g.segments() == 4);
    CHECK_NOTHROW(g.validate());
    for (std::size_t j = 0; j + 1 < g.segments(); ++j) {
        Mat junction(kPrimitiveFrames, motion::kMotionDim);
        junction.set_rows(0, g.value[j].slice_rows(252, 4));
        junction.set_rows(4, g.value[j + 1].slice_rows(0, 4));
        CHECK(junction == ps.hard[j + 1].motion);
    }
    // Sequence ends take the inner halves of the first and last hard primitive.
    CHECK(g.value[0].slice_rows(0, 4) == ps.hard[0].motion.slice_rows(4, 4));
    CHECK(g.value[3].slice_rows(252, 4) == ps.hard[4].motion.slice_rows(0, 4));
}

TEST_CASE("soft windows are placed at their targets, then the nearest free span") {
    const SegmentLayout layout{256, 64, 1};
    const PrimitiveSet ps = tagged_set(layout, {20, 21, 130, 2, 200});
    const GuidanceSpec g = build_guidance(ps, 0.5);
    CHECK_NOTHROW(g.validate());
    CHECK(g.dropped.empty());
    std::set<long> starts;
    for (const SoftWindow& w : g.soft_windows) {
        const long global_start = static_cast<long>(w.segment * 64 + w.start);
        starts.insert(global_start);
        CHECK(g.value[w.segment].slice_rows(w.start, 8) == ps.soft[w.primitive].motion);
    }
    // The stronger of the two colliding primitives keeps its exact span.
    CHECK(starts.count(16) == 1);
    // Frame 2 is inside the head hard rows: it moves to the first legal start.
    CHECK(starts.count(4) == 1);
}

TEST_CASE("soft primitives with no room are dropped, never overlapped") {
    const SegmentLayout layout{48, 24, 1};
    // A 24-frame segment fits exactly two soft windows at starts 4 and 12.
    const PrimitiveSet ps = tagged_set(layout, {8, 9, 10});
    const GuidanceSpec g = build_guidance(ps, 1.0);
    CHECK_NOTHROW(g.validate());
    CHECK(g.soft_windows.size() == 2);
    CHECK(g.dropped.size() == 1);
}

TEST_CASE("guidance rejects bad inputs") {
    const SegmentLayout layout{256, 64, 1};
    PrimitiveSet ps = tagged_set(layout);
    CHECK_THROWS(build_guidance(ps, 1.5));
    ps.hard.pop_back();
    CHECK_THROWS(build_guidance(ps, 1.0));
    GuidanceSpec g = build_guidance(tagged_set(layout), 1.0);
    g.row_mask[0][10] = 1;
    CHECK_THROWS(g.validate());
}

TEST_CASE("soft guidance activity threshold") {
    CHECK(soft_active(999, 1000, 0.001));
    CHECK(!soft_active(998, 1000, 0.001));
    CHECK(soft_active(0, 1000, 1.0));
    CHECK(!soft_active(999, 1000, 0.0));
    CHECK(soft_active(500, 1000, 0.5));
    CHECK(!soft_active(499, 1000, 0.5));
}

TEST_CASE("guided sampling pins hard rows and, at s = 1, soft windows exactly") {
    const SegmentLayout layout{256, 64, 1};
    const diffusion::NoiseSchedule sched = diffusion::make_schedule(50);
    for (const std::string kind : {"ddpm", "ddim"}) {
        CAPTURE(kind);
        const PrimitiveSet ps = tagged_set(layout, {30, 100, 170, 230});
        const GuidanceSpec g = build_guidance(ps, 1.0);
        std::vector<SegmentJob> jobs;
        for (std::size_t j = 0; j < g.segments(); ++j) jobs.push_back({row_mixing(), 100 + j});
        const auto out = guided_sample(sched, kind, 10, jobs, &g, 64, 1);
        for (std::size_t j = 0; j < g.segments(); ++j)
            for (std::size_t r = 0; r < 64; ++r)
                if (g.row_mask[j][r]) CHECK(out[j].slice_rows(r, 1) == g.value[j].slice_rows(r, 1));
        const Mat stitched = stitch_segments(out);
        for (std::size_t j = 1; j < layout.segments(); ++j) CHECK(stitched.slice_rows(j * 64 - 4, 8) == ps.hard[j].motion);
    }
}

TEST_CASE("with s = 0 only the hard rows differ from unguided sampling") {
    const SegmentLayout layout{256, 64, 1};
    const diffusion::NoiseSchedule sched = diffusion::make_schedule(40);
    const PrimitiveSet ps = tagged_set(layout, {30, 100});
    const GuidanceSpec g = build_guidance(ps, 0.0);
    const diffusion::TimestepPlan plan = diffusion::make_plan("ddpm", sched.T, 0);
    const SegmentJob job{frame_local(0.8), 77};
    const Mat guided = sample_segment(sched, plan, "ddpm", job, &g, 0, 64);
    const Mat free = sample_segment(sched, plan, "ddpm", job, nullptr, 0, 64);
    for (std::size_t r = 0; r < 64; ++r) {
        if (g.is_hard_row(r)) CHECK(guided.slice_rows(r, 1) == g.value[0].slice_rows(r, 1));
        else CHECK(guided.slice_rows(r, 1) == free.slice_rows(r, 1));
    }
}

TEST_CASE("serial and parallel segment sampling are bit-identical") {
    const SegmentLayout layout{512, 64, 1};
    const diffusion::NoiseSchedule sched = diffusion::make_schedule(30);
    const GuidanceSpec g = build_guidance(tagged_set(layout, {40, 300, 450}), 0.7);
    std::vector<SegmentJob> jobs;
    for (std::size_t j = 0; j < g.segments(); ++j) jobs.push_back({row_mixing(), derive_seed(5, {2, j})});
    const auto serial = guided_sample(sched, "ddpm", 0, jobs, &g, 64, 1);
    for (unsigned threads : {2u, 3u, 8u}) CHECK(guided_sample(sched, "ddpm", 0, jobs, &g, 64, threads) == serial);
}

TEST_CASE("errors inside a worker reach the caller") {
    const diffusion::NoiseSchedule sched = diffusion::make_schedule(10);
    std::vector<SegmentJob> jobs(3, SegmentJob{frame_local(1.0), 1});
    jobs[1].model = [](const Mat& x, long) {
        Mat out = x;
        out.data[0] = NAN;
        return out;
    };
    CHECK_THROWS_AS(guided_sample(sched, "ddim", 5, jobs, nullptr, 24, 2), diffusion::SamplingError);
}

TEST_CASE("global stage layout helpers") {
    const SegmentLayout layout{1024, 256, 1};
    CHECK(global::slot_count(layout) == 13);
    const Mat feats = test::random_mat(16, music::kFeatureDim, 1);
    const Mat pooled = global::pool_music(feats);
    REQUIRE(pooled.rows == 2);
    double m = 0;
    for (std::size_t r = 8; r < 16; ++r) m += feats(r, 5) / 8.0;
    CHECK(pooled(1, 5) == doctest::Approx(m).epsilon(1e-14));
    CHECK(global::pooled_positions(2) == std::vector<double>{3.5, 11.5});

    const dataset::PairedSample p = dataset::generate_synthetic_pair(1024, 16, 0, 4);
    const PrimitiveSet ps = dataset::extract_key_motions(p.dance, layout, p.music);
    const Mat seq = global::primitive_sequence(ps);
    CHECK(seq.rows == 13 * 8);
    CHECK(seq.slice_rows(5 * 8, 8) == ps.soft[0].motion);
    std::vector<long> soft;
    for (const auto& s : ps.soft) soft.push_back(s.target_frame);
    CHECK(global::slot_positions(layout, soft).size() == 13 * 8);

    const music::MusicFeatureSeq win{p.music.feats, p.music.fps};
    const auto targets = global::soft_targets(win, 8);
    CHECK(targets.size() == 8);
    CHECK(std::is_sorted(targets.begin(), targets.end()));
}

TEST_CASE("augmentation doubles the soft primitives onto beats; uniform placement does not") {
    const SegmentLayout layout{1024, 256, 1};
    const dataset::PairedSample p = dataset::generate_synthetic_pair(1024, 16, 2, 8);
    const PrimitiveSet ps = dataset::extract_key_motions(p.dance, layout, p.music);
    REQUIRE(ps.hard.size() == 5);
    REQUIRE(ps.soft.size() == 8);
    const auto& chain = motion::KinematicChain::smpl22();
    const PrimitiveSet aug = global::augment_primitives(ps, p.music, chain);
    CHECK_NOTHROW(aug.validate());
    CHECK(aug.hard.size() == 5);
    CHECK(aug.soft.size() == 16);
    for (std::size_t j = 0; j < 5; ++j) CHECK(aug.hard[j].motion == ps.hard[j].motion);
    const auto beats = music::beat_indices(p.music);
    std::set<long> targets;
    for (const auto& s : aug.soft) {
        CHECK(std::find(beats.begin(), beats.end(), static_cast<std::size_t>(s.target_frame)) != beats.end());
        targets.insert(s.target_frame);
    }
    CHECK(targets.size() == 16);
    // Every original survives, and each has a mirrored twin.
    std::size_t originals = 0, mirrored = 0;
    for (const auto& s : aug.soft) {
        for (const auto& o : ps.soft) {
            if (s.motion == o.motion) ++originals;
            if (max_abs_diff(s.motion, motion::mirror_frames(o.motion, chain)) < 1e-12) ++mirrored;
        }
    }
    CHECK(originals >= 8);
    CHECK(mirrored >= 8);

    const PrimitiveSet uni = global::place_uniform(ps);
    CHECK(uni.soft.size() == 8);
    CHECK(uni.soft[0].target_frame == 64);
    CHECK(uni.soft[7].target_frame == 960);
}
