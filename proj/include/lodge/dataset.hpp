#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lodge/motion.hpp"
#include "lodge/music.hpp"
#include "lodge/primitives.hpp"

namespace lodge::dataset {

struct PairedSample {
    music::MusicFeatureSeq music;
    motion::MotionSeq dance;
    int genre = 0;
    std::string id;

    void validate() const;
};

// Synthetic music/dance pair. Key poses from a genre-keyed library sit on the
// beat frames and are joined by cubic ease-in/out, so joint speed has its local
// minima at the beats. The root follows a genre-keyed closed curve, the legs
// alternate stance and swing, root height keeps the lowest foot joint 1 cm above
// the ground, and contact labels are set from foot height (< 5 cm).
PairedSample generate_synthetic_pair(std::size_t length, std::size_t beat_period, int genre, std::uint64_t seed,
                                     int genre_count = music::kDefaultGenres);

// Key motions from the first layout.N frames of a dance:
//  hard: windows centered at 0, n, ..., l*n (clamped inside the window);
//  soft: windows at the 2l highest-onset beats, each center snapped to the
//        nearest local minimum of mean joint speed within +-4 frames.
// Missing beats are replaced by uniform placement.
PrimitiveSet extract_key_motions(const motion::MotionSeq& dance, const SegmentLayout& layout,
                                 const music::MusicFeatureSeq& music);

// Centers for `count` soft primitives that lack a beat, evenly spread over `length`
// and avoiding the `taken` centers where possible.
std::vector<long> uniform_targets(std::size_t count, std::size_t length, const std::vector<long>& taken);

void write_motion(const std::filesystem::path& path, const motion::MotionSeq& seq, int genre = -1);
motion::MotionSeq read_motion(const std::filesystem::path& path);
void write_music(const std::filesystem::path& path, const music::MusicFeatureSeq& m, int genre = -1);
music::MusicFeatureSeq read_music(const std::filesystem::path& path);

struct ManifestEntry {
    std::string id;
    int genre = 0;
    std::string split;  // "train" | "test"
};

// <dir>/<id>.ldm, <dir>/<id>.ldf and <dir>/manifest.json
void write_dataset(const std::filesystem::path& dir, const std::vector<PairedSample>& samples,
                   const std::vector<std::string>& splits);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);
// Loads every pair of the given split ("" = all).
std::vector<PairedSample> load_dataset(const std::filesystem::path& dir, const std::string& split = "");

}  // namespace lodge::dataset
