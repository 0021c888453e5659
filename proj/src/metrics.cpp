#include "lodge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace lodge::metrics {

using motion::Vec3;
namespace J = motion::joint;

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Interior angle at b of the chain a-b-c, degrees.
double angle_deg(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 u = sub(a, b), v = sub(c, b);
    const double nu = norm(u), nv = norm(v);
    if (nu < 1e-12 || nv < 1e-12) return 180.0;
    const double cs = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
    return std::acos(cs) * 180.0 / std::numbers::pi;
}

}  // namespace

std::vector<double> kinetic_features(const motion::MotionSeq& seq, const motion::KinematicChain& chain) {
    seq.validate();
    if (seq.length() < 3) throw MetricError("kinetic_features: need at least 3 frames");
    Mat pos = motion::forward_kinematics(seq, chain).xyz;
    for (std::size_t r = 0; r < pos.rows; ++r)
        for (std::size_t j = 1; j < motion::kJoints; ++j)
            for (std::size_t a = 0; a < 3; ++a) pos(r, 3 * j + a) -= pos(r, a);
    const Mat v = motion::joint_velocity(pos, seq.fps);
    const Mat acc = motion::joint_acceleration(pos, seq.fps);
    std::vector<double> f(kKineticDim, 0.0);
    for (std::size_t j = 0; j < motion::kJoints; ++j) {
        double e = 0.0, am = 0.0;
        for (std::size_t r = 0; r < v.rows; ++r) {
            const Vec3 x{v(r, 3 * j), v(r, 3 * j + 1), v(r, 3 * j + 2)};
            e += 0.5 * dot(x, x);
        }
        for (std::size_t r = 0; r < acc.rows; ++r) am += norm({acc(r, 3 * j), acc(r, 3 * j + 1), acc(r, 3 * j + 2)});
        f[j] = e / static_cast<double>(v.rows);
        f[motion::kJoints + j] = am / static_cast<double>(acc.rows);
    }
    return f;
}

std::vector<double> geometric_features(const motion::MotionSeq& seq, const motion::KinematicChain& chain,
                                       const GeometricThresholds& th) {
    seq.validate();
    if (seq.length() < 1) throw MetricError("geometric_features: empty motion");
    const motion::JointPositions P = motion::forward_kinematics(seq, chain);
    std::vector<double> f(kGeometricDim, 0.0);
    for (std::size_t r = 0; r < P.length(); ++r) {
        auto at = [&](int j) { return P.at(r, static_cast<std::size_t>(j)); };
        // Body frame from the pelvis rotation, for left/right relations.
        const motion::Mat3 R = motion::rot6d_to_matrix_safe(seq.rot6d(r, 0));
        const Vec3 ankles = sub(at(J::l_ankle), at(J::r_ankle));
        const double side = R(0, 0) * ankles[0] + R(1, 0) * ankles[1] + R(2, 0) * ankles[2];  // along body +x
        const Vec3 la = at(J::l_ankle), ra = at(J::r_ankle);
        const Vec3 trunk = sub(at(J::neck), at(J::pelvis));
        const double lean = std::acos(std::clamp(trunk[1] / std::max(norm(trunk), 1e-12), -1.0, 1.0)) * 180.0 / std::numbers::pi;
        const bool pred[kGeometricDim] = {
            at(J::l_wrist)[1] > at(J::head)[1],
            at(J::r_wrist)[1] > at(J::head)[1],
            angle_deg(at(J::l_shoulder), at(J::l_elbow), at(J::l_wrist)) < th.elbow_bent_deg,
            angle_deg(at(J::r_shoulder), at(J::r_elbow), at(J::r_wrist)) < th.elbow_bent_deg,
            angle_deg(at(J::l_hip), at(J::l_knee), at(J::l_ankle)) < th.knee_bent_deg,
            angle_deg(at(J::r_hip), at(J::r_knee), at(J::r_ankle)) < th.knee_bent_deg,
            side < 0.0,
            std::hypot(la[0] - ra[0], la[2] - ra[2]) > th.wide_stance_m,
            norm(sub(at(J::l_wrist), at(J::r_wrist))) < th.hands_together_m,
            la[1] - ra[1] > th.foot_raised_m,
            ra[1] - la[1] > th.foot_raised_m,
            lean > th.torso_lean_deg,
        };
        for (std::size_t k = 0; k < kGeometricDim; ++k) f[k] += pred[k] ? 1.0 : 0.0;
    }
    for (double& x : f) x /= static_cast<double>(P.length());
    return f;
}

FeatureStats compute_stats(const std::vector<std::vector<double>>& feats) {
    if (feats.empty()) throw MetricError("compute_stats: no feature vectors");
    const std::size_t d = feats.front().size(), n = feats.size();
    FeatureStats s;
    s.mean.assign(d, 0.0);
    s.cov.assign(d * d, 0.0);
    for (const auto& f : feats) {
        if (f.size() != d) throw MetricError("compute_stats: ragged feature vectors");
        for (std::size_t i = 0; i < d; ++i) s.mean[i] += f[i] / static_cast<double>(n);
    }
    if (n > 1) {
        for (const auto& f : feats)
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) s.cov[i * d + j] += (f[i] - s.mean[i]) * (f[j] - s.mean[j]);
        for (double& c : s.cov) c /= static_cast<double>(n - 1);
    }
    for (std::size_t i = 0; i < d; ++i) s.cov[i * d + i] += kCovRidge;
    return s;
}

double fid(const FeatureStats& a, const FeatureStats& b) {
    const std::size_t d = a.dim();
    if (b.dim() != d || a.cov.size() != d * d || b.cov.size() != d * d) throw MetricError("fid: dimension mismatch");
    using MatX = Eigen::MatrixXd;
    const MatX A = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(a.cov.data(), d, d);
    const MatX B = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(b.cov.data(), d, d);
    const MatX As = 0.5 * (A + A.transpose()), Bs = 0.5 * (B + B.transpose());

    Eigen::SelfAdjointEigenSolver<MatX> ea(As);
    const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const MatX Ah = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
    const MatX M = Ah * Bs * Ah;
    Eigen::SelfAdjointEigenSolver<MatX> em(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    const double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    double dm = 0.0;
    for (std::size_t i = 0; i < d; ++i) dm += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
    return std::max(0.0, dm + As.trace() + Bs.trace() - 2.0 * tr_sqrt);
}

double diversity(const std::vector<std::vector<double>>& feats) {
    if (feats.size() < 2) return 0.0;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        for (std::size_t j = i + 1; j < feats.size(); ++j) {
            if (feats[i].size() != feats[j].size()) throw MetricError("diversity: ragged feature vectors");
            double s = 0.0;
            for (std::size_t k = 0; k < feats[i].size(); ++k) s += (feats[i][k] - feats[j][k]) * (feats[i][k] - feats[j][k]);
            total += std::sqrt(s);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

std::vector<std::size_t> dance_beats(const motion::MotionSeq& seq, const motion::KinematicChain& chain) {
    seq.validate();
    if (seq.length() < 2) return {};
    const std::vector<double> s = motion::mean_joint_speed(motion::forward_kinematics(seq, chain).xyz, seq.fps);
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i)
        if (s[i] < s[i - 1] && s[i] <= s[i + 1]) out.push_back(i);
    return out;
}

double beat_align_score(const std::vector<std::size_t>& music_beats, const std::vector<std::size_t>& dance, double sigma) {
    if (music_beats.empty()) throw MetricError("beat_align_score: the music has no beats");
    if (!(sigma > 0.0)) throw MetricError("beat_align_score: sigma must be positive");
    if (dance.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t b : music_beats) {
        double best = INFINITY;
        for (std::size_t d : dance) {
            const double dist = static_cast<double>(d) - static_cast<double>(b);
            best = std::min(best, dist * dist);
        }
        total += std::exp(-best / (2.0 * sigma * sigma));
    }
    return total / static_cast<double>(music_beats.size());
}

double beat_align_score(const motion::MotionSeq& dance, const music::MusicFeatureSeq& music,
                        const motion::KinematicChain& chain, double sigma) {
    music.validate();
    return beat_align_score(music::beat_indices(music), dance_beats(dance, chain), sigma);
}

double foot_skating_ratio(const motion::MotionSeq& seq, const motion::KinematicChain& chain, const SkatingThresholds& th) {
    seq.validate();
    if (seq.length() < 2) throw MetricError("foot_skating_ratio: need at least 2 frames");
    const Mat P = motion::forward_kinematics(seq, chain).xyz;
    std::size_t skating = 0;
    for (std::size_t r = 0; r + 1 < P.rows; ++r) {
        bool any = false;
        for (int fj : chain.foot_joints) {
            const auto c = 3 * static_cast<std::size_t>(fj);
            if (P(r, c + 1) >= th.contact_height) continue;
            if (std::hypot(P(r + 1, c) - P(r, c), P(r + 1, c + 2) - P(r, c + 2)) > th.slide) any = true;
        }
        if (any) ++skating;
    }
    return static_cast<double>(skating) / static_cast<double>(P.rows - 1);
}

}  // namespace lodge::metrics
