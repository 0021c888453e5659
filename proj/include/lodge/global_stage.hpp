#pragma once

// Global stage: compresses an N-frame music window and samples the 3l+1
// characteristic dance primitives (l+1 hard, 2l soft) as one sequence of
// 8-frame slots.

#include <functional>
#include <vector>

#include "lodge/config.hpp"
#include "lodge/dataset.hpp"
#include "lodge/denoiser.hpp"
#include "lodge/diffusion.hpp"
#include "lodge/primitives.hpp"
#include "lodge/train.hpp"

namespace lodge::global {

inline constexpr std::size_t kPool = 8;

// Stride-8 mean pooling over frames: N x 35 -> N/8 x 35.
Mat pool_music(const Mat& feats);
// Center frame of each pooled row.
std::vector<double> pooled_positions(std::size_t rows);

std::size_t slot_count(const SegmentLayout& layout);  // 3l + 1

// Targets for the soft slots of one window: the `count` highest-onset beats,
// in temporal order, padded by uniform placement when beats run out.
std::vector<long> soft_targets(const music::MusicFeatureSeq& window, std::size_t count);

// Frame of every row of the slot sequence: hard slot j covers the clamped window
// around j*n, soft slot i the window around soft[i].
std::vector<double> slot_positions(const SegmentLayout& layout, const std::vector<long>& soft);

// Hard primitives then soft primitives, stacked: (3l+1)*8 x 139.
Mat primitive_sequence(const PrimitiveSet& ps);

class GlobalModel {
public:
    GlobalModel() = default;
    GlobalModel(const SegmentLayout& layout, const ModelConfig& mc, std::uint64_t seed);

    const SegmentLayout& layout() const { return layout_; }
    Denoiser& net() { return net_; }
    const Denoiser& net() const { return net_; }

    // Compressed conditioning rows: pooling, projection and one encoder layer.
    Mat downsample(const Mat& window_feats) const;

    void save(ckpt::Checkpoint& c) const;
    static GlobalModel from_checkpoint(const ckpt::Checkpoint& c);

private:
    SegmentLayout layout_;
    Denoiser net_;
};

struct GlobalExample {
    Mat x0;                     // (3l+1)*8 x 139
    std::vector<double> pos;
    Mat cond;                   // N/8 x 35
};

// Training targets from every N-frame crop (stride n) of each pair.
std::vector<GlobalExample> build_examples(const std::vector<dataset::PairedSample>& pairs, const SegmentLayout& layout);

using LogFn = std::function<void(const train::LossRecord&)>;

// Runs optimizer steps until state.step == cfg.steps. Batch contents at step k
// depend only on (seed, k), so an interrupted run resumes exactly.
void train_global(GlobalModel& model, train::TrainState& state, const std::vector<GlobalExample>& examples,
                  const diffusion::NoiseSchedule& sched, const TrainConfig& cfg, const losses::LossWeights& weights,
                  std::uint64_t seed, const LogFn& log = {});

// Samples primitives for one N-frame music window (targets local to the window).
PrimitiveSet generate_primitives(const GlobalModel& model, const music::MusicFeatureSeq& window,
                                 const diffusion::NoiseSchedule& sched, const SamplerConfig& sampler, std::uint64_t seed);

// Primitives for k consecutive windows. Window w uses seed derive(seed, w);
// targets are sequence frames; adjacent windows share the junction hard primitive
// (the first hard primitive of window w+1 is the last of window w).
PrimitiveSet generate_long(const GlobalModel& model, const music::MusicFeatureSeq& music, std::size_t windows,
                           const diffusion::NoiseSchedule& sched, const SamplerConfig& sampler, std::uint64_t seed);

// Soft primitives 2l -> 4l per window: mirrored copies go to the next-ranked
// unused beats, every soft target is snapped to a beat, hard primitives untouched.
PrimitiveSet augment_primitives(const PrimitiveSet& ps, const music::MusicFeatureSeq& music,
                                const motion::KinematicChain& chain);

// Ablation without augmentation: the 2l soft primitives spread uniformly over
// each window, unmirrored.
PrimitiveSet place_uniform(const PrimitiveSet& ps);

}  // namespace lodge::global
