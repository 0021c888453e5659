#pragma once

// Motion representation and skeleton math: 139-channel frames, 6D rotations,
// the 22-joint kinematic chain, forward kinematics (with its exact adjoint for
// the training losses), finite-difference kinematics and sagittal mirroring.

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>

#include "lodge/tensor.hpp"

namespace lodge::motion {

inline constexpr std::size_t kJoints = 22;
inline constexpr std::size_t kContactDim = 4;
inline constexpr std::size_t kTransOffset = 4;
inline constexpr std::size_t kRotOffset = 7;
inline constexpr std::size_t kMotionDim = kRotOffset + 6 * kJoints;  // 139
inline constexpr std::size_t kPosDim = 3 * kJoints;                  // 66
inline constexpr double kDefaultFps = 30.0;

using Vec3 = std::array<double, 3>;

// Row-major 3x3.
struct Mat3 {
    std::array<double, 9> m{};
    double& operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }
    double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }
    static Mat3 identity();
    friend bool operator==(const Mat3&, const Mat3&) = default;
};

Mat3 mul(const Mat3& a, const Mat3& b);
Mat3 mul_tn(const Mat3& a, const Mat3& b);  // a^T b
Mat3 mul_nt(const Mat3& a, const Mat3& b);  // a b^T
Vec3 mul(const Mat3& a, const Vec3& v);
Mat3 rot_x(double rad);
Mat3 rot_y(double rad);
Mat3 rot_z(double rad);
double det(const Mat3& a);

class DegenerateRotation : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class InvalidMotion : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Columns of the result are Gram-Schmidt of (r6[0:3], r6[3:6]) plus their cross product.
Mat3 rot6d_to_matrix(std::span<const double, 6> r6);
// First two columns; rejects matrices that are not orthonormal within 1e-6.
std::array<double, 6> matrix_to_rot6d(const Mat3& r);

// Gram-Schmidt that never throws: norms below 1e-9 are clamped. Agrees with
// rot6d_to_matrix on every valid input. Used on network predictions.
Mat3 rot6d_to_matrix_safe(std::span<const double, 6> r6);
// Adjoint of rot6d_to_matrix_safe: accumulates dL/dr6 given dL/dR.
void rot6d_backward(std::span<const double, 6> r6, const Mat3& dR, std::span<double, 6> dr6);

struct MotionSeq {
    Mat frames;  // L x 139
    double fps = kDefaultFps;

    MotionSeq() = default;
    explicit MotionSeq(Mat f, double fps_ = kDefaultFps) : frames(std::move(f)), fps(fps_) {}
    std::size_t length() const { return frames.rows; }
    // Channel count, contact range and finiteness.
    void validate() const;

    static MotionSeq rest(std::size_t length, Vec3 root_translation = {0, 0, 0});
    Vec3 root_translation(std::size_t frame) const;
    void set_root_translation(std::size_t frame, Vec3 t);
    void set_rotation(std::size_t frame, std::size_t joint, const Mat3& r);
    std::span<const double, 6> rot6d(std::size_t frame, std::size_t joint) const;
};

struct KinematicChain {
    std::array<int, kJoints> parent{};
    std::array<Vec3, kJoints> rest_offset{};
    std::array<int, kJoints> left_right_map{};
    // L-toe, L-heel, R-toe, R-heel; heels map to the ankle joints.
    std::array<int, 4> foot_joints{};

    // Topological order, involutive left/right map, single root.
    void validate() const;
    static const KinematicChain& smpl22();
};

namespace joint {
enum : int {
    pelvis = 0, l_hip, r_hip, spine1, l_knee, r_knee, spine2, l_ankle, r_ankle, spine3,
    l_toe, r_toe, neck, l_collar, r_collar, head, l_shoulder, r_shoulder, l_elbow, r_elbow,
    l_wrist, r_wrist
};
}

// L x 66 world positions (joint j occupies columns 3j..3j+2). The up axis is +y.
struct JointPositions {
    Mat xyz;
    std::size_t length() const { return xyz.rows; }
    Vec3 at(std::size_t frame, std::size_t j) const {
        return {xyz(frame, 3 * j), xyz(frame, 3 * j + 1), xyz(frame, 3 * j + 2)};
    }
};

JointPositions forward_kinematics(const MotionSeq& seq, const KinematicChain& chain);
// Same as above on raw frames (any finite values; degenerate 6D is clamped).
Mat fk_positions(const Mat& frames, const KinematicChain& chain);
// Exact vector-Jacobian product of fk_positions: returns dL/dframes (L x 139)
// given dL/dpositions (L x 66). Contact channels receive zero.
Mat fk_backward(const Mat& frames, const KinematicChain& chain, const Mat& dpos);

// Forward differences scaled by fps: (L-1) x C and (L-2) x C.
Mat joint_velocity(const Mat& pos, double fps);
Mat joint_acceleration(const Mat& pos, double fps);

MotionSeq mirror_motion(const MotionSeq& seq, const KinematicChain& chain);
Mat mirror_frames(const Mat& frames, const KinematicChain& chain);
// x -> -x on every joint position, with joint columns permuted by the left/right map.
Mat mirror_positions(const Mat& pos, const KinematicChain& chain);

struct FootState {
    Mat position;    // L x 12, feet in foot_joints order
    Mat velocity;    // (L-1) x 12
    Mat horizontal;  // (L-1) x 4, |(vx, vz)|
    Mat vertical;    // (L-1) x 4, vy
};

FootState foot_state(const MotionSeq& seq, const KinematicChain& chain);

// Mean over joints of |velocity| per frame: (L-1) values, units m/s.
std::vector<double> mean_joint_speed(const Mat& pos, double fps);

}  // namespace lodge::motion
