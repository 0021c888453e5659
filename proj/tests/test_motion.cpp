#include <doctest.h>

#include <cmath>

#include "lodge/motion.hpp"
#include "support.hpp"

using namespace lodge;
using namespace lodge::motion;
using test::kFdTol;

namespace {

double orthonormal_err(const Mat3& R) {
    const Mat3 I = mul_tn(R, R);
    double e = 0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) e = std::max(e, std::abs(I(r, c) - (r == c ? 1.0 : 0.0)));
    return e;
}

}  // namespace

TEST_CASE("6D rotations decode to proper rotations") {
    Rng rng(1);
    for (int i = 0; i < 500; ++i) {
        std::array<double, 6> r6{};
        for (double& v : r6) v = rng.normal();
        const Mat3 R = rot6d_to_matrix(r6);
        CHECK(orthonormal_err(R) < 1e-12);
        CHECK(det(R) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(rot6d_to_matrix_safe(r6) == R);
        // Encoding then decoding is exact up to rounding.
        const Mat3 R2 = rot6d_to_matrix(matrix_to_rot6d(R));
        for (std::size_t k = 0; k < 9; ++k) CHECK(std::abs(R2.m[k] - R.m[k]) < 1e-12);
    }
}

TEST_CASE("degenerate 6D input") {
    const std::array<double, 6> zero{};
    CHECK_THROWS_AS(rot6d_to_matrix(zero), DegenerateRotation);
    const std::array<double, 6> parallel{1, 0, 0, 2, 0, 0};
    CHECK_THROWS_AS(rot6d_to_matrix(parallel), DegenerateRotation);
    const Mat3 R = rot6d_to_matrix_safe(parallel);
    for (double v : R.m) CHECK(std::isfinite(v));
    Mat3 bad = Mat3::identity();
    bad(0, 0) = 2.0;
    CHECK_THROWS(matrix_to_rot6d(bad));
}

TEST_CASE("rot6d backward matches finite differences") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Mat r6(1, 6);
        for (double& v : r6.data) v = rng.normal();
        Mat3 dR;
        for (double& v : dR.m) v = rng.normal();
        Mat g(1, 6);
        rot6d_backward(std::span<const double, 6>(r6.ptr(), 6), dR, std::span<double, 6>(g.ptr(), 6));
        auto loss = [&] {
            const Mat3 R = rot6d_to_matrix_safe(std::span<const double, 6>(r6.ptr(), 6));
            double s = 0;
            for (std::size_t k = 0; k < 9; ++k) s += R.m[k] * dR.m[k];
            return s;
        };
        CHECK(test::fd_max_rel(r6, g, loss) < kFdTol);
    }
}

TEST_CASE("kinematic chain") {
    const KinematicChain& c = KinematicChain::smpl22();
    CHECK_NOTHROW(c.validate());
    CHECK(c.parent[0] == -1);
    for (std::size_t j = 1; j < kJoints; ++j) CHECK(c.parent[j] < static_cast<int>(j));
    for (std::size_t j = 0; j < kJoints; ++j) CHECK(c.left_right_map[static_cast<std::size_t>(c.left_right_map[j])] == static_cast<int>(j));
}

TEST_CASE("forward kinematics of the rest pose follows the offsets") {
    const KinematicChain& c = KinematicChain::smpl22();
    const MotionSeq rest = MotionSeq::rest(2, {0.5, 1.0, -0.25});
    const JointPositions P = forward_kinematics(rest, c);
    for (std::size_t j = 0; j < kJoints; ++j) {
        Vec3 expect{0.5, 1.0, -0.25};
        for (int k = static_cast<int>(j); k > 0; k = c.parent[static_cast<std::size_t>(k)])
            for (int a = 0; a < 3; ++a) expect[a] += c.rest_offset[static_cast<std::size_t>(k)][a];
        for (int a = 0; a < 3; ++a) CHECK(P.at(1, j)[a] == doctest::Approx(expect[a]).epsilon(1e-12));
    }
}

TEST_CASE("bone lengths are preserved by any pose") {
    const KinematicChain& c = KinematicChain::smpl22();
    const MotionSeq seq(test::random_frames(10, 3, 1.0));
    const JointPositions P = forward_kinematics(seq, c);
    for (std::size_t r = 0; r < seq.length(); ++r)
        for (std::size_t j = 1; j < kJoints; ++j) {
            const auto p = static_cast<std::size_t>(c.parent[j]);
            const Vec3 a = P.at(r, j), b = P.at(r, p);
            const double len = std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
            const Vec3& o = c.rest_offset[j];
            CHECK(std::abs(len - std::hypot(o[0], o[1], o[2])) < 1e-6);
        }
}

TEST_CASE("translation equivariance") {
    const KinematicChain& c = KinematicChain::smpl22();
    MotionSeq a(test::random_frames(6, 4));
    MotionSeq b = a;
    const Vec3 shift{1.5, -0.2, 3.0};
    for (std::size_t r = 0; r < b.length(); ++r) {
        Vec3 t = b.root_translation(r);
        for (int k = 0; k < 3; ++k) t[k] += shift[k];
        b.set_root_translation(r, t);
    }
    const Mat Pa = forward_kinematics(a, c).xyz, Pb = forward_kinematics(b, c).xyz;
    for (std::size_t r = 0; r < Pa.rows; ++r)
        for (std::size_t col = 0; col < Pa.cols; ++col) CHECK(std::abs(Pb(r, col) - Pa(r, col) - shift[col % 3]) < 1e-6);
}

TEST_CASE("mirroring is an involution and commutes with forward kinematics") {
    const KinematicChain& c = KinematicChain::smpl22();
    const MotionSeq seq(test::random_frames(8, 5, 0.8));
    const MotionSeq m = mirror_motion(seq, c);
    CHECK(max_abs_diff(mirror_motion(m, c).frames, seq.frames) < 1e-6);
    const Mat lhs = forward_kinematics(m, c).xyz;
    const Mat rhs = mirror_positions(forward_kinematics(seq, c).xyz, c);
    CHECK(max_abs_diff(lhs, rhs) < 1e-6);
    for (std::size_t r = 0; r < m.length(); ++r)
        for (std::size_t j = 0; j < kJoints; ++j) CHECK(det(rot6d_to_matrix(m.rot6d(r, j))) == doctest::Approx(1.0).epsilon(1e-6));
    // Contacts swap feet: L-toe, L-heel, R-toe, R-heel.
    CHECK(m.frames(0, 0) == seq.frames(0, 2));
    CHECK(m.frames(0, 1) == seq.frames(0, 3));
}

TEST_CASE("fk backward matches finite differences") {
    const KinematicChain& c = KinematicChain::smpl22();
    Mat f = test::random_frames(3, 6);
    // Perturb off the orthonormal manifold so the Gram-Schmidt path is exercised.
    Rng rng(7);
    for (std::size_t i = 0; i < f.size(); ++i) f.data[i] += 0.05 * rng.normal();
    const Mat w = test::random_mat(3, kPosDim, 8);
    const Mat g = fk_backward(f, c, w);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t k = 0; k < kContactDim; ++k) CHECK(g(r, k) == 0.0);
    CHECK(test::fd_max_rel(f, g, [&] { return test::weighted_sum(fk_positions(f, c), w); }) < kFdTol);
}

TEST_CASE("finite-difference kinematics") {
    Mat pos(4, 3);
    for (std::size_t r = 0; r < 4; ++r) pos(r, 0) = 0.5 * static_cast<double>(r * r);
    const Mat v = joint_velocity(pos, 10.0), a = joint_acceleration(pos, 10.0);
    REQUIRE(v.rows == 3);
    REQUIRE(a.rows == 2);
    CHECK(v(0, 0) == doctest::Approx(5.0));
    CHECK(v(2, 0) == doctest::Approx(25.0));
    CHECK(a(0, 0) == doctest::Approx(100.0));
    CHECK(a(1, 0) == doctest::Approx(100.0));
}

TEST_CASE("motion validation") {
    MotionSeq s = MotionSeq::rest(3);
    CHECK_NOTHROW(s.validate());
    s.frames(1, 0) = 1.5;
    CHECK_THROWS_AS(s.validate(), InvalidMotion);
    s.frames(1, 0) = NAN;
    CHECK_THROWS_AS(s.validate(), InvalidMotion);
    CHECK_THROWS_AS(MotionSeq(Mat(2, 100)).validate(), InvalidMotion);
}

TEST_CASE("foot state of a sliding foot") {
    const KinematicChain& c = KinematicChain::smpl22();
    MotionSeq s = MotionSeq::rest(3, {0, 1, 0});
    s.set_root_translation(1, {0.1, 1, 0});
    s.set_root_translation(2, {0.1, 1.2, 0});
    const FootState fs = foot_state(s, c);
    CHECK(fs.horizontal(0, 0) == doctest::Approx(0.1 * s.fps));
    CHECK(fs.vertical(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(fs.vertical(1, 2) == doctest::Approx(0.2 * s.fps));
}
