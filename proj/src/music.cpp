#include "lodge/music.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "lodge/rng.hpp"

namespace lodge::music {

void MusicFeatureSeq::validate() const {
    if (feats.cols != kFeatureDim) throw InvalidFeatures("music features must have 35 channels");
    if (feats.rows < 1) throw InvalidFeatures("music features must have at least one frame");
    if (!(fps > 0.0)) throw InvalidFeatures("music fps must be positive");
    for (std::size_t f = 0; f < feats.rows; ++f) {
        for (std::size_t c = 0; c < kFeatureDim; ++c) {
            const double v = feats(f, c);
            if (!std::isfinite(v)) throw InvalidFeatures("non-finite feature at frame " + std::to_string(f));
            if ((c == kPeak || c == kBeat) && v != 0.0 && v != 1.0) {
                throw InvalidFeatures("one-hot channel not in {0,1} at frame " + std::to_string(f));
            }
        }
    }
}

void GenreLabel::validate(int genre_count) const {
    if (id < 0 || id >= genre_count) {
        throw InvalidFeatures("genre " + std::to_string(id) + " outside [0, " + std::to_string(genre_count) + ")");
    }
}

std::vector<std::size_t> beat_indices(const MusicFeatureSeq& m) {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < m.feats.rows; ++f)
        if (m.feats(f, kBeat) == 1.0) out.push_back(f);
    return out;
}

std::vector<std::size_t> rank_beats(const MusicFeatureSeq& m) {
    std::vector<std::size_t> beats = beat_indices(m);
    std::stable_sort(beats.begin(), beats.end(), [&](std::size_t a, std::size_t b) {
        return m.feats(a, kOnset) > m.feats(b, kOnset);
    });
    return beats;
}

MusicFeatureSeq synth_music(std::size_t length, std::size_t beat_period, int genre, std::uint64_t seed,
                            int genre_count) {
    if (beat_period < 8) throw InvalidFeatures("beat period must be at least 8 frames");
    if (length < beat_period) throw InvalidFeatures("clip shorter than one beat period");
    GenreLabel{genre}.validate(genre_count);

    constexpr double fps = 30.0;
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    MusicFeatureSeq m;
    m.fps = fps;
    m.feats = Mat(length, kFeatureDim);

    Rng rng(derive_seed(seed, {0xB3A7}));
    std::vector<double> beat_frames, strength;
    for (std::size_t b = beat_period / 2; b < length; b += beat_period) {
        beat_frames.push_back(static_cast<double>(b));
        strength.push_back(0.5 + 0.5 * rng.uniform());
        m.feats(b, kBeat) = 1.0;
    }

    constexpr double width = 1.5;
    for (std::size_t f = 0; f < length; ++f) {
        double e = 0.0;
        for (std::size_t k = 0; k < beat_frames.size(); ++k) {
            const double d = static_cast<double>(f) - beat_frames[k];
            if (std::abs(d) < 8.0 * width) e += strength[k] * std::exp(-d * d / (2.0 * width * width));
        }
        m.feats(f, kOnset) = e;
    }
    for (std::size_t f = 1; f + 1 < length; ++f) {
        const double e = m.feats(f, kOnset);
        if (e > 0.1 && e > m.feats(f - 1, kOnset) && e >= m.feats(f + 1, kOnset)) m.feats(f, kPeak) = 1.0;
    }

    // Genre-keyed spectral bands; the clip seed only sets phases.
    const double band_lo = 0.3 + 1.2 * static_cast<double>(genre % 8);
    const double band_hi = band_lo + 0.6;
    Rng phase_rng(derive_seed(seed, {0x9A5E}));
    for (std::size_t c = kMfccBegin; c < kPeak; ++c) {
        Rng genre_rng(derive_seed(0x6E27E, {static_cast<std::uint64_t>(genre), c}));
        std::array<double, 3> freq{}, amp{}, phase{};
        for (std::size_t h = 0; h < 3; ++h) {
            freq[h] = genre_rng.uniform(band_lo, band_hi);
            amp[h] = genre_rng.uniform(0.2, 0.5);
            phase[h] = phase_rng.uniform(0.0, kTwoPi);
        }
        const double onset_gain = genre_rng.uniform(-0.3, 0.3);
        const bool chroma = c >= kChromaBegin;
        const double offset = chroma ? genre_rng.uniform(0.2, 0.6) : 0.0;
        for (std::size_t f = 0; f < length; ++f) {
            const double t = static_cast<double>(f) / fps;
            double v = offset + onset_gain * m.feats(f, kOnset);
            for (std::size_t h = 0; h < 3; ++h) v += (chroma ? 0.4 : 1.0) * amp[h] * std::sin(kTwoPi * freq[h] * t + phase[h]);
            m.feats(f, c) = v;
        }
    }
    return m;
}

Segments segment_features(const MusicFeatureSeq& m, std::size_t global_len, std::size_t local_len) {
    if (local_len == 0 || global_len == 0 || global_len % local_len != 0) {
        throw InvalidFeatures("global window must be a positive multiple of the local window");
    }
    Segments s;
    s.used_frames = (m.length() / local_len) * local_len;
    for (std::size_t b = 0; b < s.used_frames; b += local_len) s.local.push_back(m.feats.slice_rows(b, local_len));
    for (std::size_t b = 0; b < s.used_frames; b += global_len) {
        s.global.push_back(m.feats.slice_rows(b, std::min(global_len, s.used_frames - b)));
    }
    return s;
}

}  // namespace lodge::music
