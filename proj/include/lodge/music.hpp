#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lodge/tensor.hpp"

namespace lodge::music {

inline constexpr std::size_t kFeatureDim = 35;
inline constexpr std::size_t kOnset = 0;
inline constexpr std::size_t kMfccBegin = 1;     // 20 channels
inline constexpr std::size_t kChromaBegin = 21;  // 12 channels
inline constexpr std::size_t kPeak = 33;
inline constexpr std::size_t kBeat = 34;
inline constexpr int kDefaultGenres = 4;

class InvalidFeatures : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct MusicFeatureSeq {
    Mat feats;  // L x 35
    double fps = 30.0;

    std::size_t length() const { return feats.rows; }
    void validate() const;
};

struct GenreLabel {
    int id = 0;
    void validate(int genre_count) const;
};

// Frames whose beat channel is set, ascending.
std::vector<std::size_t> beat_indices(const MusicFeatureSeq& m);

// Beats ordered by onset-envelope value (descending), ties broken by frame.
std::vector<std::size_t> rank_beats(const MusicFeatureSeq& m);

// Synthetic stand-in for audio feature extraction. Beats fall every
// beat_period frames starting at beat_period / 2; the spectral channels are
// band-limited noise whose bands are keyed by genre.
MusicFeatureSeq synth_music(std::size_t length, std::size_t beat_period, int genre, std::uint64_t seed,
                            int genre_count = kDefaultGenres);

struct Segments {
    std::vector<Mat> global;  // N-frame windows (the last may be shorter)
    std::vector<Mat> local;   // n-frame windows
    std::size_t used_frames = 0;
};

// Trims the tail to a multiple of n, then partitions without overlap.
Segments segment_features(const MusicFeatureSeq& m, std::size_t global_len, std::size_t local_len);

}  // namespace lodge::music
