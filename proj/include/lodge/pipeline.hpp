#pragma once

// End-to-end flows behind the command line: dataset generation, the three
// training passes with resumable checkpoints, long-sequence sampling,
// evaluation and export.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lodge/config.hpp"
#include "lodge/dataset.hpp"
#include "lodge/global_stage.hpp"
#include "lodge/guidance.hpp"
#include "lodge/local_stage.hpp"

namespace lodge::pipeline {

namespace fs = std::filesystem;

// Pair i has genre i % genres; every fifth pair (i % 5 == 4) is held out.
std::vector<dataset::PairedSample> synthetic_set(const RunConfig& cfg, std::vector<std::string>* splits = nullptr);
void gen_data(const RunConfig& cfg, const fs::path& out_dir);

// Per-channel mean and floored standard deviation over every frame of every pair.
Normalizer fit_normalizer(const std::vector<dataset::PairedSample>& pairs);

struct TrainOptions {
    bool resume = false;  // continue from the checkpoint in out_dir when present
    std::function<void(const train::LossRecord&)> log;
};

// <out>/global.ckpt, <out>/loss.csv, <out>/config.json
void run_train_global(const RunConfig& cfg, const std::vector<dataset::PairedSample>& pairs, const fs::path& out_dir,
                      const TrainOptions& opt = {});
// <out>/local.ckpt, <out>/loss.csv, <out>/config.json
void run_train_local(const RunConfig& cfg, const std::vector<dataset::PairedSample>& pairs, const fs::path& out_dir,
                     const TrainOptions& opt = {});
// Starts from the EMA weights of a local checkpoint; writes <out>/local.ckpt.
void run_finetune(const RunConfig& cfg, const std::vector<dataset::PairedSample>& pairs, const fs::path& local_ckpt,
                  const fs::path& out_dir, const TrainOptions& opt = {});

global::GlobalModel load_global(const fs::path& path);
local::LocalModel load_local(const fs::path& path);

struct SampleResult {
    motion::MotionSeq motion;
    PrimitiveSet generated;  // global-stage output
    PrimitiveSet placed;     // after augmentation or uniform placement
    guidance::GuidanceSpec spec;
};

// Music is trimmed to k*N frames (k >= 1). Global stage per window, soft
// placement, guidance, parallel local sampling of every segment and stitching.
SampleResult sample_long(const global::GlobalModel& gm, const local::LocalModel& lm, const music::MusicFeatureSeq& music,
                         int genre, const RunConfig& cfg, std::uint64_t seed);

// Motion windows of `window` frames (a shorter sequence counts as one window).
std::vector<motion::MotionSeq> windows(const motion::MotionSeq& seq, std::size_t window);

// FID_k, FID_g, Div_k, Div_g over feature windows; BAS and FSR averaged per
// motion. BAS needs one music sequence per motion.
nlohmann::json evaluate(const std::vector<motion::MotionSeq>& motions, const std::vector<music::MusicFeatureSeq>* musics,
                        const std::vector<motion::MotionSeq>& refs, const RunConfig& cfg);
void write_report(const fs::path& path, const nlohmann::json& report);

// CSV of frame, joint, x, y, z and a JSON skeleton (names, parents, offsets).
void export_csv(const motion::MotionSeq& seq, const fs::path& csv, const fs::path& skeleton);

const std::array<const char*, motion::kJoints>& joint_names();

}  // namespace lodge::pipeline
