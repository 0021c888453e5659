#pragma once

// Characteristic dance primitives: 8-frame key-motion blocks pinned to a
// target frame, and the N/n window layout that decides how many there are.

#include <cstddef>
#include <filesystem>
#include <vector>

#include "lodge/tensor.hpp"

namespace lodge {

inline constexpr std::size_t kPrimitiveFrames = 8;
inline constexpr std::size_t kHalfPrimitive = kPrimitiveFrames / 2;

struct SegmentLayout {
    std::size_t N = 1024;  // global window frames
    std::size_t n = 256;   // local window frames
    std::size_t k = 1;     // global windows

    std::size_t l() const { return N / n; }
    std::size_t segments() const { return k * l(); }
    std::size_t frames() const { return k * N; }
    // n divides N, n >= 8 (and room for one soft window), k >= 1.
    void validate() const;
};

enum class PrimitiveKind { hard, soft };

struct DancePrimitive {
    Mat motion;                 // 8 x 139
    long target_frame = 0;      // window center, sequence frame index
    PrimitiveKind kind = PrimitiveKind::hard;
    double strength = 0.0;      // onset value of the anchoring beat (soft only)
};

struct PrimitiveSet {
    std::vector<DancePrimitive> hard;  // k*l + 1, target j*n
    std::vector<DancePrimitive> soft;  // sorted by target_frame
    SegmentLayout layout;

    void sort_soft();
    // 8-frame blocks, hard count, target bounds, soft ordering.
    void validate() const;
};

// First frame of the 8-frame window centered at `center`, clamped into [0, length - 8].
std::size_t window_start(long center, std::size_t length);

// Dump for inspection: container kind "primitives", header lists kind and target per block.
void write_primitives(const std::filesystem::path& path, const PrimitiveSet& ps);
PrimitiveSet read_primitives(const std::filesystem::path& path);

}  // namespace lodge
