#pragma once

// Differentiable foot-ground contact score and the per-frame foot feature
// vector fed to the foot refine block.

#include <cstddef>

#include "lodge/motion.hpp"
#include "lodge/tensor.hpp"

namespace lodge::foot {

struct ContactParams {
    double height0 = 0.05;  // m
    double speed0 = 0.1;    // m/s
    double a = 100.0;       // height sharpness, 1/m
    double b = 50.0;        // speed sharpness, s/m
    double eps = 1e-8;      // keeps sqrt differentiable at rest
};

double sigmoid(double x);

// sigma(a (h0 - height)) * sigma(b (v0 - speed)), speed = sqrt(|v|^2 + eps).
double contact_score(double height, const motion::Vec3& velocity, const ContactParams& p);

// Per frame, for each foot joint in chain order: position (3), velocity (3), score (1).
inline constexpr std::size_t kFeatureDim = 28;

// frames: B*seq x 139 stacked samples. Velocity is the forward difference
// (fps-scaled); the last frame of each sample repeats the previous one.
Mat foot_features(const Mat& frames, std::size_t seq, double fps, const motion::KinematicChain& chain,
                  const ContactParams& p);
// dL/dframes given dL/dfeatures.
Mat foot_features_backward(const Mat& frames, std::size_t seq, double fps, const motion::KinematicChain& chain,
                           const ContactParams& p, const Mat& dfeat);

}  // namespace lodge::foot
