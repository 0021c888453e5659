#pragma once

// Evaluation battery: kinetic and geometric motion features, Frechet
// distance, diversity, beat alignment and foot skating.

#include <cstddef>
#include <vector>

#include "lodge/motion.hpp"
#include "lodge/music.hpp"

namespace lodge::metrics {

inline constexpr std::size_t kKineticDim = 2 * motion::kJoints;  // 44
inline constexpr std::size_t kGeometricDim = 12;
inline constexpr double kCovRidge = 1e-6;

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Per joint: mean kinetic energy 0.5 |v|^2, then mean acceleration magnitude.
// The root is measured in world space, every other joint relative to the root.
std::vector<double> kinetic_features(const motion::MotionSeq& seq, const motion::KinematicChain& chain);

enum GeometricTemplate : std::size_t {
    l_hand_above_head, r_hand_above_head, l_elbow_bent, r_elbow_bent, l_knee_bent, r_knee_bent,
    feet_crossed, wide_stance, hands_together, l_foot_raised, r_foot_raised, torso_lean
};

struct GeometricThresholds {
    double elbow_bent_deg = 120.0;   // interior angle below this
    double knee_bent_deg = 150.0;
    double wide_stance_m = 0.6;      // horizontal ankle distance above this
    double hands_together_m = 0.2;
    double foot_raised_m = 0.1;      // ankle height above the other ankle
    double torso_lean_deg = 30.0;    // pelvis->neck against +y
};

// Fraction of frames on which each template predicate holds.
std::vector<double> geometric_features(const motion::MotionSeq& seq, const motion::KinematicChain& chain,
                                       const GeometricThresholds& th = {});

struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> cov;  // d x d row-major
    std::size_t dim() const { return mean.size(); }
};

// Sample mean and (n-1)-normalized covariance plus kCovRidge on the diagonal.
FeatureStats compute_stats(const std::vector<std::vector<double>>& feats);

// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), negative eigenvalues clamped to 0.
double fid(const FeatureStats& a, const FeatureStats& b);

// Mean Euclidean distance over all unordered pairs.
double diversity(const std::vector<std::vector<double>>& feats);

// Local minima of mean joint speed (frame index of the minimum's forward difference).
std::vector<std::size_t> dance_beats(const motion::MotionSeq& seq, const motion::KinematicChain& chain);

// Mean over music beats of exp(-d^2 / (2 sigma^2)), d the distance to the nearest dance beat.
double beat_align_score(const std::vector<std::size_t>& music_beats, const std::vector<std::size_t>& dance_beats,
                        double sigma);
double beat_align_score(const motion::MotionSeq& dance, const music::MusicFeatureSeq& music,
                        const motion::KinematicChain& chain, double sigma = 3.0);

struct SkatingThresholds {
    double contact_height = 0.05;  // m
    double slide = 0.025;          // m per frame, horizontal
};

// Fraction of the L-1 frame transitions on which some foot in contact at the
// first frame moves horizontally more than the slide threshold.
double foot_skating_ratio(const motion::MotionSeq& seq, const motion::KinematicChain& chain,
                          const SkatingThresholds& th = {});

}  // namespace lodge::metrics
