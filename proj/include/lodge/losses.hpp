#pragma once

// Training objective: x0 reconstruction plus kinematic auxiliary terms on
// forward-kinematics positions. All terms take stacked blocks (B samples of
// `block` frames each); differences never cross a block boundary.

#include <cstddef>

#include "lodge/motion.hpp"
#include "lodge/tensor.hpp"

namespace lodge::losses {

struct LossWeights {
    double joint = 1.0;
    double vel = 100.0;  // large because both trainers use per-frame differences
    double acc = 100.0;
    double contact = 10.0;
    double genre = 0.0;

    void validate() const;
};

struct AuxLosses {
    double joint = 0.0;    // mean over frames, joints of |p^ - p|^2
    double vel = 0.0;      // same on fps-scaled velocities
    double acc = 0.0;      // same on fps^2-scaled accelerations
    double contact = 0.0;  // mean over transitions, feet of |(v_h + min(v_y, 0)) * b^|^2
};

// Mean squared error over every element. Accumulates scale * dL/dpred into dpred if given.
double recon_loss(const Mat& d0, const Mat& pred, Mat* dpred = nullptr, double scale = 1.0);

// Accumulates sum_k w_k dL_k/dpred into dpred if given (w from `weights`,
// terms with zero weight are still evaluated). Requires block >= 3.
AuxLosses aux_losses(const Mat& d0, const Mat& pred, std::size_t block, double fps,
                     const motion::KinematicChain& chain, const LossWeights& weights, Mat* dpred = nullptr);

double total_loss(double recon, const AuxLosses& aux, double genre, const LossWeights& w);

}  // namespace lodge::losses
