#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "lodge/tensor.hpp"

namespace lodge {

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

// Order-sensitive hash of a seed and any number of stream identifiers.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

// Portable random source: the engine is std::mt19937_64 (fully specified by
// the standard) and the distributions are implemented here so that streams
// are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();
    Mat normal_mat(std::size_t rows, std::size_t cols, double stddev = 1.0);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lodge
