#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "lodge/dataset.hpp"
#include "lodge/metrics.hpp"
#include "support.hpp"

using namespace lodge;
using namespace lodge::metrics;

namespace {

const motion::KinematicChain& chain() { return motion::KinematicChain::smpl22(); }

// Rest pose with the lowest foot joint 1 cm above the ground.
motion::MotionSeq grounded_rest(std::size_t L) {
    motion::MotionSeq s = motion::MotionSeq::rest(L);
    const motion::JointPositions P = motion::forward_kinematics(s, chain());
    double low = 1e9;
    for (int f : chain().foot_joints) low = std::min(low, P.at(0, static_cast<std::size_t>(f))[1]);
    for (std::size_t r = 0; r < L; ++r) s.set_root_translation(r, {0, 0.01 - low, 0});
    return s;
}

FeatureStats stats_of(const std::vector<double>& mean, const Eigen::MatrixXd& cov) {
    FeatureStats s;
    s.mean = mean;
    const auto d = static_cast<Eigen::Index>(mean.size());
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) s.cov.push_back(cov(i, j));
    return s;
}

// Independent route: Tr sqrt(Sa Sb) from the (real, non-negative) eigenvalues of the product.
double fid_oracle(const std::vector<double>& ma, const Eigen::MatrixXd& A, const std::vector<double>& mb, const Eigen::MatrixXd& B) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(A * B);
    double tr = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
    double dm = 0;
    for (std::size_t i = 0; i < ma.size(); ++i) dm += (ma[i] - mb[i]) * (ma[i] - mb[i]);
    return dm + A.trace() + B.trace() - 2 * tr;
}

Eigen::MatrixXd random_spd(int d, std::uint64_t seed) {
    const Mat m = test::random_mat(static_cast<std::size_t>(d), static_cast<std::size_t>(d), seed);
    Eigen::MatrixXd X(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    return X * X.transpose() / d + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

TEST_CASE("fid of a distribution with itself is zero") {
    const Eigen::MatrixXd A = random_spd(12, 1);
    const FeatureStats a = stats_of(std::vector<double>(12, 0.3), A);
    CHECK(std::abs(fid(a, a)) < 1e-8);
}

TEST_CASE("one-dimensional fid closed form") {
    for (auto [ma, sa, mb, sb] : {std::tuple{0.0, 1.0, 0.0, 2.0}, {1.5, 0.3, -0.5, 0.7}, {2.0, 1.0, 2.0, 1.0}}) {
        FeatureStats a{{ma}, {sa * sa}}, b{{mb}, {sb * sb}};
        CHECK(std::abs(fid(a, b) - ((ma - mb) * (ma - mb) + (sa - sb) * (sa - sb))) < 1e-8);
    }
}

TEST_CASE("fid agrees with the product-eigenvalue route and is symmetric") {
    for (int d : {3, 12, 44}) {
        const Eigen::MatrixXd A = random_spd(d, 10 + d), B = random_spd(d, 20 + d);
        std::vector<double> ma(d), mb(d);
        for (int i = 0; i < d; ++i) {
            ma[i] = 0.1 * i;
            mb[i] = -0.05 * i;
        }
        const double f = fid(stats_of(ma, A), stats_of(mb, B));
        CHECK(f == doctest::Approx(fid_oracle(ma, A, mb, B)).epsilon(1e-8));
        CHECK(f == doctest::Approx(fid(stats_of(mb, B), stats_of(ma, A))).epsilon(1e-9));
    }
}

TEST_CASE("feature statistics") {
    const std::vector<std::vector<double>> f{{1, 2}, {3, 2}, {5, 8}};
    const FeatureStats s = compute_stats(f);
    CHECK(s.mean[0] == doctest::Approx(3.0));
    CHECK(s.cov[0] == doctest::Approx(4.0 + kCovRidge));
    CHECK(s.cov[1] == doctest::Approx(6.0));
    CHECK(s.cov[3] == doctest::Approx(12.0 + kCovRidge));
    CHECK_THROWS_AS(compute_stats({}), MetricError);
    CHECK_THROWS_AS(compute_stats({{1.0}, {1.0, 2.0}}), MetricError);
}

TEST_CASE("diversity matches brute force") {
    Rng rng(3);
    std::vector<std::vector<double>> f(17, std::vector<double>(5));
    for (auto& v : f)
        for (double& e : v) e = rng.normal();
    double total = 0;
    int pairs = 0;
    for (std::size_t i = 0; i < f.size(); ++i)
        for (std::size_t j = 0; j < f.size(); ++j) {
            if (i == j) continue;
            double s = 0;
            for (std::size_t k = 0; k < 5; ++k) s += (f[i][k] - f[j][k]) * (f[i][k] - f[j][k]);
            total += std::sqrt(s);
            ++pairs;
        }
    CHECK(std::abs(diversity(f) - total / pairs) < 1e-12);
    CHECK(diversity({{1.0, 2.0}}) == 0.0);
}

TEST_CASE("beat alignment oracles") {
    const std::vector<std::size_t> beats{10, 30, 50};
    CHECK(std::abs(beat_align_score(beats, beats, 3.0) - 1.0) < 1e-9);
    CHECK(std::abs(beat_align_score(beats, {13, 33, 53}, 3.0) - std::exp(-0.5)) < 1e-9);
    CHECK(std::abs(beat_align_score(beats, {7, 27, 47, 100}, 3.0) - std::exp(-0.5)) < 1e-9);
    CHECK(beat_align_score(beats, {}, 3.0) == 0.0);
    CHECK_THROWS_AS(beat_align_score({}, beats, 3.0), MetricError);
    CHECK_THROWS_AS(beat_align_score(beats, beats, 0.0), MetricError);
}

TEST_CASE("dance beats are speed minima") {
    // Root speed follows |sin|: minima where the root stops.
    motion::MotionSeq s = motion::MotionSeq::rest(60);
    double x = 0;
    for (std::size_t r = 0; r < 60; ++r) {
        x += std::abs(std::sin(static_cast<double>(r) * std::numbers::pi / 20.0)) + 0.01;
        s.set_root_translation(r, {0.05 * x, 1, 0});
    }
    const auto b = dance_beats(s, chain());
    REQUIRE(b.size() == 2);
    CHECK(b[0] == 19);
    CHECK(b[1] == 39);
}

TEST_CASE("foot skating constructed cases") {
    motion::MotionSeq still = grounded_rest(5);
    CHECK(foot_skating_ratio(still, chain()) == 0.0);
    // Slide 5 cm on transitions 0 and 2, hold on 1 and 3.
    motion::MotionSeq slide = still;
    double x = 0;
    for (std::size_t r = 0; r < 5; ++r) {
        motion::Vec3 t = slide.root_translation(r);
        t[0] = x;
        slide.set_root_translation(r, t);
        if (r % 2 == 0) x += 0.05;
    }
    CHECK(foot_skating_ratio(slide, chain()) == 0.5);
    // The same slide in the air is not skating.
    motion::MotionSeq air = slide;
    for (std::size_t r = 0; r < 5; ++r) {
        motion::Vec3 t = air.root_translation(r);
        t[1] += 0.5;
        air.set_root_translation(r, t);
    }
    CHECK(foot_skating_ratio(air, chain()) == 0.0);
    CHECK_THROWS_AS(foot_skating_ratio(grounded_rest(1), chain()), MetricError);
}

TEST_CASE("kinetic features of a uniformly moving root") {
    motion::MotionSeq s = grounded_rest(10);
    for (std::size_t r = 0; r < 10; ++r) {
        motion::Vec3 t = s.root_translation(r);
        t[2] = 0.1 * static_cast<double>(r);
        s.set_root_translation(r, t);
    }
    const auto f = kinetic_features(s, chain());
    REQUIRE(f.size() == kKineticDim);
    const double v = 0.1 * s.fps;
    CHECK(f[0] == doctest::Approx(0.5 * v * v));
    for (std::size_t j = 1; j < motion::kJoints; ++j) CHECK(std::abs(f[j]) < 1e-12);
    for (std::size_t j = 0; j < motion::kJoints; ++j) CHECK(std::abs(f[motion::kJoints + j]) < 1e-9);
    CHECK_THROWS_AS(kinetic_features(grounded_rest(2), chain()), MetricError);
}

TEST_CASE("geometric features are frame fractions and mirror left to right") {
    const dataset::PairedSample p = dataset::generate_synthetic_pair(128, 16, 3, 5);
    const auto f = geometric_features(p.dance, chain());
    REQUIRE(f.size() == kGeometricDim);
    for (double v : f) CHECK((v >= 0.0 && v <= 1.0));
    const auto m = geometric_features(motion::mirror_motion(p.dance, chain()), chain());
    CHECK(m[l_hand_above_head] == f[r_hand_above_head]);
    CHECK(m[l_elbow_bent] == f[r_elbow_bent]);
    CHECK(m[l_knee_bent] == f[r_knee_bent]);
    CHECK(m[l_foot_raised] == f[r_foot_raised]);
    CHECK(m[wide_stance] == f[wide_stance]);
    CHECK(m[hands_together] == f[hands_together]);
    CHECK(m[torso_lean] == f[torso_lean]);
}

TEST_CASE("geometric templates on constructed poses") {
    motion::MotionSeq s = grounded_rest(2);
    const auto rest = geometric_features(s, chain());
    CHECK(rest[torso_lean] == 0.0);
    CHECK(rest[l_foot_raised] == 0.0);
    // Lift the whole left leg by bending the hip forward 90 degrees.
    s.set_rotation(1, motion::joint::l_hip, motion::rot_x(-std::numbers::pi / 2));
    const auto lifted = geometric_features(s, chain());
    CHECK(lifted[l_foot_raised] == 0.5);
    CHECK(lifted[r_foot_raised] == 0.0);
    // Tip the pelvis 60 degrees forward.
    motion::MotionSeq lean = grounded_rest(1);
    lean.set_rotation(0, motion::joint::pelvis, motion::rot_x(std::numbers::pi / 3));
    CHECK(geometric_features(lean, chain())[torso_lean] == 1.0);
}
