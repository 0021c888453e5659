#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "lodge/nn.hpp"

namespace lodge::nn {

class NonFiniteGradient : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AdanConfig {
    double lr = 1e-3;
    double beta1 = 0.98;  // first moment
    double beta2 = 0.92;  // gradient-difference moment
    double beta3 = 0.99;  // second moment
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment buffers, one Mat per parameter, in ParamList order.
struct OptimState {
    long step = 0;
    std::vector<Mat> m, v, n, prev_grad;

    void init(const ParamList& ps);
};

// Throws NonFiniteGradient naming the offending parameter.
void check_grads(const ParamList& ps);

// Adan (Nesterov momentum with gradient differences), bias-corrected.
// On the first step the previous gradient is taken to be the current one.
void adan_step(const ParamList& ps, OptimState& st, const AdanConfig& cfg);
void adam_step(const ParamList& ps, OptimState& st, const AdamConfig& cfg);

// Scales all gradients so their global L2 norm is at most max_norm; returns the pre-clip norm.
double clip_grad_norm(const ParamList& ps, double max_norm);

}  // namespace lodge::nn
