#include "lodge/motion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lodge::motion {

Mat3 Mat3::identity() {
    Mat3 r;
    r(0, 0) = r(1, 1) = r(2, 2) = 1.0;
    return r;
}

Mat3 mul(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
    return r;
}

Mat3 mul_tn(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = a(0, i) * b(0, j) + a(1, i) * b(1, j) + a(2, i) * b(2, j);
    return r;
}

Mat3 mul_nt(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = a(i, 0) * b(j, 0) + a(i, 1) * b(j, 1) + a(i, 2) * b(j, 2);
    return r;
}

Vec3 mul(const Mat3& a, const Vec3& v) {
    return {a(0, 0) * v[0] + a(0, 1) * v[1] + a(0, 2) * v[2], a(1, 0) * v[0] + a(1, 1) * v[1] + a(1, 2) * v[2],
            a(2, 0) * v[0] + a(2, 1) * v[1] + a(2, 2) * v[2]};
}

Mat3 rot_x(double t) {
    Mat3 r = Mat3::identity();
    r(1, 1) = std::cos(t);
    r(1, 2) = -std::sin(t);
    r(2, 1) = std::sin(t);
    r(2, 2) = std::cos(t);
    return r;
}

Mat3 rot_y(double t) {
    Mat3 r = Mat3::identity();
    r(0, 0) = std::cos(t);
    r(0, 2) = std::sin(t);
    r(2, 0) = -std::sin(t);
    r(2, 2) = std::cos(t);
    return r;
}

Mat3 rot_z(double t) {
    Mat3 r = Mat3::identity();
    r(0, 0) = std::cos(t);
    r(0, 1) = -std::sin(t);
    r(1, 0) = std::sin(t);
    r(1, 1) = std::cos(t);
    return r;
}

double det(const Mat3& a) {
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

namespace {

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross3(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

constexpr double kClamp = 1e-9;

// Intermediates of the Gram-Schmidt map, kept for the adjoint.
struct GramSchmidt {
    Vec3 a1, a2, b1, u2, b2, b3;
    double n1 = 0, n2 = 0, d = 0;
    bool clamp1 = false, clamp2 = false;

    explicit GramSchmidt(std::span<const double, 6> r6) {
        a1 = {r6[0], r6[1], r6[2]};
        a2 = {r6[3], r6[4], r6[5]};
        n1 = norm3(a1);
        if (n1 < kClamp) {
            n1 = kClamp;
            clamp1 = true;
        }
        for (int i = 0; i < 3; ++i) b1[i] = a1[i] / n1;
        d = dot3(b1, a2);
        for (int i = 0; i < 3; ++i) u2[i] = a2[i] - d * b1[i];
        n2 = norm3(u2);
        if (n2 < kClamp) {
            n2 = kClamp;
            clamp2 = true;
        }
        for (int i = 0; i < 3; ++i) b2[i] = u2[i] / n2;
        b3 = cross3(b1, b2);
    }

    Mat3 matrix() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i) {
            r(i, 0) = b1[i];
            r(i, 1) = b2[i];
            r(i, 2) = b3[i];
        }
        return r;
    }
};

}  // namespace

Mat3 rot6d_to_matrix(std::span<const double, 6> r6) {
    const Vec3 a1{r6[0], r6[1], r6[2]};
    const Vec3 a2{r6[3], r6[4], r6[5]};
    const double n1 = norm3(a1);
    const double n2 = norm3(a2);
    if (!(n1 > 1e-12) || !(n2 > 1e-12)) throw DegenerateRotation("rot6d: zero-length column");
    if (norm3(cross3(a1, a2)) <= 1e-9 * n1 * n2) throw DegenerateRotation("rot6d: parallel columns");
    return GramSchmidt(r6).matrix();
}

Mat3 rot6d_to_matrix_safe(std::span<const double, 6> r6) { return GramSchmidt(r6).matrix(); }

void rot6d_backward(std::span<const double, 6> r6, const Mat3& dR, std::span<double, 6> dr6) {
    const GramSchmidt g(r6);
    Vec3 db1{dR(0, 0), dR(1, 0), dR(2, 0)};
    Vec3 db2{dR(0, 1), dR(1, 1), dR(2, 1)};
    const Vec3 db3{dR(0, 2), dR(1, 2), dR(2, 2)};
    // b3 = b1 x b2
    const Vec3 c1 = cross3(g.b2, db3);
    const Vec3 c2 = cross3(db3, g.b1);
    for (int i = 0; i < 3; ++i) {
        db1[i] += c1[i];
        db2[i] += c2[i];
    }
    // b2 = u2 / |u2|
    Vec3 du2;
    const double p2 = g.clamp2 ? 0.0 : dot3(g.b2, db2);
    for (int i = 0; i < 3; ++i) du2[i] = (db2[i] - g.b2[i] * p2) / g.n2;
    // u2 = a2 - (b1.a2) b1
    const double q = dot3(g.b1, du2);
    for (int i = 0; i < 3; ++i) {
        dr6[3 + static_cast<std::size_t>(i)] += du2[i] - g.b1[i] * q;
        db1[i] -= g.d * du2[i] + q * g.a2[i];
    }
    // b1 = a1 / |a1|
    const double p1 = g.clamp1 ? 0.0 : dot3(g.b1, db1);
    for (int i = 0; i < 3; ++i) dr6[static_cast<std::size_t>(i)] += (db1[i] - g.b1[i] * p1) / g.n1;
}

std::array<double, 6> matrix_to_rot6d(const Mat3& r) {
    const Mat3 rtr = mul_tn(r, r);
    const Mat3 eye = Mat3::identity();
    for (std::size_t i = 0; i < 9; ++i) {
        if (!(std::abs(rtr.m[i] - eye.m[i]) <= 1e-6)) throw DegenerateRotation("matrix_to_rot6d: not orthonormal");
    }
    if (!(std::abs(det(r) - 1.0) <= 1e-6)) throw DegenerateRotation("matrix_to_rot6d: determinant is not +1");
    return {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)};
}

// ---------------------------------------------------------------------------

void MotionSeq::validate() const {
    if (frames.cols != kMotionDim) {
        throw InvalidMotion("motion must have 139 channels, got " + std::to_string(frames.cols));
    }
    if (!(fps > 0.0) || !std::isfinite(fps)) throw InvalidMotion("motion fps must be positive");
    for (std::size_t f = 0; f < frames.rows; ++f) {
        for (std::size_t c = 0; c < kMotionDim; ++c) {
            const double v = frames(f, c);
            if (!std::isfinite(v)) throw InvalidMotion("non-finite value at frame " + std::to_string(f));
            if (c < kContactDim && (v < 0.0 || v > 1.0)) {
                throw InvalidMotion("contact channel outside [0,1] at frame " + std::to_string(f));
            }
        }
    }
}

MotionSeq MotionSeq::rest(std::size_t length, Vec3 root_translation) {
    MotionSeq s(Mat(length, kMotionDim));
    for (std::size_t f = 0; f < length; ++f) {
        s.set_root_translation(f, root_translation);
        for (std::size_t j = 0; j < kJoints; ++j) s.set_rotation(f, j, Mat3::identity());
    }
    return s;
}

Vec3 MotionSeq::root_translation(std::size_t f) const {
    return {frames(f, kTransOffset), frames(f, kTransOffset + 1), frames(f, kTransOffset + 2)};
}

void MotionSeq::set_root_translation(std::size_t f, Vec3 t) {
    for (std::size_t i = 0; i < 3; ++i) frames(f, kTransOffset + i) = t[i];
}

void MotionSeq::set_rotation(std::size_t f, std::size_t j, const Mat3& r) {
    const std::size_t base = kRotOffset + 6 * j;
    for (int i = 0; i < 3; ++i) {
        frames(f, base + static_cast<std::size_t>(i)) = r(i, 0);
        frames(f, base + 3 + static_cast<std::size_t>(i)) = r(i, 1);
    }
}

std::span<const double, 6> MotionSeq::rot6d(std::size_t f, std::size_t j) const {
    return std::span<const double, 6>(frames.ptr() + f * kMotionDim + kRotOffset + 6 * j, 6);
}

// ---------------------------------------------------------------------------

void KinematicChain::validate() const {
    if (parent[0] != -1) throw std::logic_error("chain: joint 0 must be the root");
    for (std::size_t j = 1; j < kJoints; ++j) {
        if (parent[j] < 0 || static_cast<std::size_t>(parent[j]) >= j) {
            throw std::logic_error("chain: parents must precede children");
        }
    }
    for (std::size_t j = 0; j < kJoints; ++j) {
        const int m = left_right_map[j];
        if (m < 0 || static_cast<std::size_t>(m) >= kJoints ||
            left_right_map[static_cast<std::size_t>(m)] != static_cast<int>(j)) {
            throw std::logic_error("chain: left/right map is not an involution");
        }
    }
}

const KinematicChain& KinematicChain::smpl22() {
    static const KinematicChain chain = [] {
        KinematicChain c;
        c.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
        // meters; +x = subject's left, +y = up, +z = forward. T-pose.
        c.rest_offset = {{
            {0.0, 0.0, 0.0},       // pelvis
            {0.06, -0.09, 0.0},    // l_hip
            {-0.06, -0.09, 0.0},   // r_hip
            {0.0, 0.11, -0.01},    // spine1
            {0.04, -0.38, 0.0},    // l_knee
            {-0.04, -0.38, 0.0},   // r_knee
            {0.0, 0.13, 0.0},      // spine2
            {0.0, -0.40, -0.03},   // l_ankle
            {0.0, -0.40, -0.03},   // r_ankle
            {0.0, 0.05, 0.02},     // spine3
            {0.0, -0.03, 0.12},    // l_toe
            {0.0, -0.03, 0.12},    // r_toe
            {0.0, 0.21, -0.03},    // neck
            {0.08, 0.12, -0.01},   // l_collar
            {-0.08, 0.12, -0.01},  // r_collar
            {0.0, 0.09, 0.05},     // head
            {0.12, 0.04, -0.01},   // l_shoulder
            {-0.12, 0.04, -0.01},  // r_shoulder
            {0.26, 0.0, 0.0},      // l_elbow
            {-0.26, 0.0, 0.0},     // r_elbow
            {0.25, 0.0, 0.0},      // l_wrist
            {-0.25, 0.0, 0.0},     // r_wrist
        }};
        c.left_right_map = {0, 2, 1, 3, 5, 4, 6, 8, 7, 9, 11, 10, 12, 14, 13, 15, 17, 16, 19, 18, 21, 20};
        c.foot_joints = {joint::l_toe, joint::l_ankle, joint::r_toe, joint::r_ankle};
        c.validate();
        return c;
    }();
    return chain;
}

// ---------------------------------------------------------------------------

namespace {

void fk_frame(const double* row, const KinematicChain& chain, std::array<Mat3, kJoints>& local,
              std::array<Mat3, kJoints>& global, double* pos) {
    for (std::size_t j = 0; j < kJoints; ++j) {
        local[j] = rot6d_to_matrix_safe(std::span<const double, 6>(row + kRotOffset + 6 * j, 6));
    }
    global[0] = local[0];
    for (int i = 0; i < 3; ++i) pos[i] = row[kTransOffset + static_cast<std::size_t>(i)] + chain.rest_offset[0][static_cast<std::size_t>(i)];
    for (std::size_t j = 1; j < kJoints; ++j) {
        const auto p = static_cast<std::size_t>(chain.parent[j]);
        global[j] = mul(global[p], local[j]);
        const Vec3 o = mul(global[p], chain.rest_offset[j]);
        for (std::size_t i = 0; i < 3; ++i) pos[3 * j + i] = pos[3 * p + i] + o[i];
    }
}

}  // namespace

Mat fk_positions(const Mat& frames, const KinematicChain& chain) {
    require_shape(frames, frames.rows, kMotionDim, "fk_positions");
    Mat pos(frames.rows, kPosDim);
    std::array<Mat3, kJoints> local, global;
    for (std::size_t f = 0; f < frames.rows; ++f) fk_frame(frames.ptr() + f * kMotionDim, chain, local, global, pos.ptr() + f * kPosDim);
    return pos;
}

JointPositions forward_kinematics(const MotionSeq& seq, const KinematicChain& chain) {
    require_shape(seq.frames, seq.frames.rows, kMotionDim, "forward_kinematics");
    return JointPositions{fk_positions(seq.frames, chain)};
}

Mat fk_backward(const Mat& frames, const KinematicChain& chain, const Mat& dpos) {
    require_shape(frames, frames.rows, kMotionDim, "fk_backward frames");
    require_shape(dpos, frames.rows, kPosDim, "fk_backward dpos");
    Mat dframes(frames.rows, kMotionDim);
    std::array<Mat3, kJoints> local, global, dglobal;
    std::array<double, kPosDim> pos{};
    std::array<Vec3, kJoints> dp{};
    for (std::size_t f = 0; f < frames.rows; ++f) {
        const double* row = frames.ptr() + f * kMotionDim;
        fk_frame(row, chain, local, global, pos.data());
        for (std::size_t j = 0; j < kJoints; ++j) {
            dp[j] = {dpos(f, 3 * j), dpos(f, 3 * j + 1), dpos(f, 3 * j + 2)};
            dglobal[j] = Mat3{};
        }
        double* drow = dframes.ptr() + f * kMotionDim;
        for (std::size_t j = kJoints - 1; j >= 1; --j) {
            const auto p = static_cast<std::size_t>(chain.parent[j]);
            const Vec3& off = chain.rest_offset[j];
            for (int a = 0; a < 3; ++a) {
                dp[p][static_cast<std::size_t>(a)] += dp[j][static_cast<std::size_t>(a)];
                for (int b = 0; b < 3; ++b) dglobal[p](a, b) += dp[j][static_cast<std::size_t>(a)] * off[static_cast<std::size_t>(b)];
            }
            // global[j] = global[p] * local[j]
            const Mat3 g_to_parent = mul_nt(dglobal[j], local[j]);
            for (std::size_t i = 0; i < 9; ++i) dglobal[p].m[i] += g_to_parent.m[i];
            const Mat3 dlocal = mul_tn(global[p], dglobal[j]);
            rot6d_backward(std::span<const double, 6>(row + kRotOffset + 6 * j, 6), dlocal,
                           std::span<double, 6>(drow + kRotOffset + 6 * j, 6));
        }
        for (std::size_t i = 0; i < 3; ++i) drow[kTransOffset + i] += dp[0][i];
        rot6d_backward(std::span<const double, 6>(row + kRotOffset, 6), dglobal[0],
                       std::span<double, 6>(drow + kRotOffset, 6));
    }
    return dframes;
}

Mat joint_velocity(const Mat& pos, double fps) {
    if (pos.rows < 2) throw InvalidMotion("joint_velocity needs at least 2 frames");
    Mat v(pos.rows - 1, pos.cols);
    for (std::size_t f = 0; f + 1 < pos.rows; ++f)
        for (std::size_t c = 0; c < pos.cols; ++c) v(f, c) = (pos(f + 1, c) - pos(f, c)) * fps;
    return v;
}

Mat joint_acceleration(const Mat& pos, double fps) {
    if (pos.rows < 3) throw InvalidMotion("joint_acceleration needs at least 3 frames");
    return joint_velocity(joint_velocity(pos, fps), fps);
}

std::vector<double> mean_joint_speed(const Mat& pos, double fps) {
    const Mat v = joint_velocity(pos, fps);
    const std::size_t joints = pos.cols / 3;
    std::vector<double> speed(v.rows, 0.0);
    for (std::size_t f = 0; f < v.rows; ++f) {
        double s = 0.0;
        for (std::size_t j = 0; j < joints; ++j) {
            const double x = v(f, 3 * j), y = v(f, 3 * j + 1), z = v(f, 3 * j + 2);
            s += std::sqrt(x * x + y * y + z * z);
        }
        speed[f] = s / static_cast<double>(joints);
    }
    return speed;
}

// ---------------------------------------------------------------------------

Mat mirror_frames(const Mat& frames, const KinematicChain& chain) {
    require_shape(frames, frames.rows, kMotionDim, "mirror_frames");
    Mat out(frames.rows, kMotionDim);
    for (std::size_t f = 0; f < frames.rows; ++f) {
        const double* in = frames.ptr() + f * kMotionDim;
        double* o = out.ptr() + f * kMotionDim;
        o[0] = in[2];
        o[1] = in[3];
        o[2] = in[0];
        o[3] = in[1];
        o[kTransOffset] = -in[kTransOffset];
        o[kTransOffset + 1] = in[kTransOffset + 1];
        o[kTransOffset + 2] = in[kTransOffset + 2];
        // M R M with M = diag(-1, 1, 1) acts on the two stored columns by sign flips.
        for (std::size_t j = 0; j < kJoints; ++j) {
            const double* src = in + kRotOffset + 6 * static_cast<std::size_t>(chain.left_right_map[j]);
            double* dst = o + kRotOffset + 6 * j;
            dst[0] = src[0];
            dst[1] = -src[1];
            dst[2] = -src[2];
            dst[3] = -src[3];
            dst[4] = src[4];
            dst[5] = src[5];
        }
    }
    return out;
}

MotionSeq mirror_motion(const MotionSeq& seq, const KinematicChain& chain) {
    return MotionSeq(mirror_frames(seq.frames, chain), seq.fps);
}

Mat mirror_positions(const Mat& pos, const KinematicChain& chain) {
    require_shape(pos, pos.rows, kPosDim, "mirror_positions");
    Mat out(pos.rows, kPosDim);
    for (std::size_t f = 0; f < pos.rows; ++f) {
        for (std::size_t j = 0; j < kJoints; ++j) {
            const auto s = static_cast<std::size_t>(chain.left_right_map[j]);
            out(f, 3 * j) = -pos(f, 3 * s);
            out(f, 3 * j + 1) = pos(f, 3 * s + 1);
            out(f, 3 * j + 2) = pos(f, 3 * s + 2);
        }
    }
    return out;
}

FootState foot_state(const MotionSeq& seq, const KinematicChain& chain) {
    if (seq.length() < 2) throw InvalidMotion("foot_state needs at least 2 frames");
    const Mat pos = forward_kinematics(seq, chain).xyz;
    FootState st;
    st.position = Mat(seq.length(), 12);
    for (std::size_t f = 0; f < seq.length(); ++f)
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t i = 0; i < 3; ++i)
                st.position(f, 3 * k + i) = pos(f, 3 * static_cast<std::size_t>(chain.foot_joints[k]) + i);
    st.velocity = joint_velocity(st.position, seq.fps);
    st.horizontal = Mat(st.velocity.rows, 4);
    st.vertical = Mat(st.velocity.rows, 4);
    for (std::size_t f = 0; f < st.velocity.rows; ++f) {
        for (std::size_t k = 0; k < 4; ++k) {
            const double vx = st.velocity(f, 3 * k), vy = st.velocity(f, 3 * k + 1), vz = st.velocity(f, 3 * k + 2);
            st.horizontal(f, k) = std::sqrt(vx * vx + vz * vz);
            st.vertical(f, k) = vy;
        }
    }
    return st;
}

}  // namespace lodge::motion
