#pragma once

// Shared helpers: random fixtures and central finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "lodge/motion.hpp"
#include "lodge/rng.hpp"
#include "lodge/tensor.hpp"

namespace lodge::test {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTol = 1e-4;
// Gradient entries below kFdFloor * max(1, M) are compared on absolute
// error. M is the magnitude of the loss before cancellation (sum of |terms|,
// |L| by default): central differences carry rounding noise of order 1e-16 M / h.
inline constexpr double kFdFloor = 1e-6;

inline Mat random_mat(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return rng.normal_mat(rows, cols, scale);
}

// Sum of w * y, so that dL/dy = w.
inline double weighted_sum(const Mat& y, const Mat& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * w.data[i];
    return s;
}
inline double weighted_abs(const Mat& y, const Mat& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y.data[i] * w.data[i]);
    return s;
}

inline double rel_err(double a, double n, double floor = kFdFloor) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Largest relative error between `grad` and central differences of `loss`
// with respect to x, over at most max_checks entries (all when 0).
inline double fd_max_rel(Mat& x, const Mat& grad, const std::function<double()>& loss, std::size_t max_checks = 0,
                         std::uint64_t seed = 7, double magnitude = 0.0) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_checks > 0 && max_checks < idx.size()) {
        Rng rng(seed);
        for (std::size_t i = 0; i < max_checks; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        idx.resize(max_checks);
    }
    const double floor = kFdFloor * std::max({1.0, std::abs(loss()), magnitude});
    double worst = 0.0;
    for (std::size_t i : idx) {
        const double keep = x.data[i];
        x.data[i] = keep + kFdStep;
        const double up = loss();
        x.data[i] = keep - kFdStep;
        const double down = loss();
        x.data[i] = keep;
        worst = std::max(worst, rel_err(grad.data[i], (up - down) / (2.0 * kFdStep), floor));
    }
    return worst;
}

// Frames with random but well-conditioned rotations, a wandering root and contacts in [0, 1].
inline Mat random_frames(std::size_t rows, std::uint64_t seed, double spread = 0.4) {
    Rng rng(seed);
    Mat f(rows, motion::kMotionDim);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < motion::kContactDim; ++c) f(r, c) = rng.uniform();
        f(r, motion::kTransOffset) = rng.normal() * 0.3;
        f(r, motion::kTransOffset + 1) = 0.9 + 0.05 * rng.normal();
        f(r, motion::kTransOffset + 2) = rng.normal() * 0.3;
        for (std::size_t j = 0; j < motion::kJoints; ++j) {
            const motion::Mat3 R = motion::mul(motion::rot_y(spread * rng.normal()),
                                               motion::mul(motion::rot_x(spread * rng.normal()), motion::rot_z(spread * rng.normal())));
            const auto r6 = motion::matrix_to_rot6d(R);
            for (std::size_t k = 0; k < 6; ++k) f(r, motion::kRotOffset + 6 * j + k) = r6[k];
        }
    }
    return f;
}

}  // namespace lodge::test
