#include "lodge/foot.hpp"

#include <cmath>
#include <stdexcept>

namespace lodge::foot {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double contact_score(double height, const motion::Vec3& v, const ContactParams& p) {
    const double speed = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + p.eps);
    return sigmoid(p.a * (p.height0 - height)) * sigmoid(p.b * (p.speed0 - speed));
}

namespace {

void check(const Mat& frames, std::size_t seq) {
    require_shape(frames, frames.rows, motion::kMotionDim, "foot_features");
    if (seq < 2 || frames.rows % seq != 0) throw std::invalid_argument("foot_features: need seq >= 2 dividing the rows");
}

// Rows r and r+1 used for the velocity of row r.
std::pair<std::size_t, std::size_t> vel_rows(std::size_t r, std::size_t seq) {
    return (r % seq == seq - 1) ? std::pair{r - 1, r} : std::pair{r, r + 1};
}

}  // namespace

Mat foot_features(const Mat& frames, std::size_t seq, double fps, const motion::KinematicChain& chain, const ContactParams& p) {
    check(frames, seq);
    const Mat P = motion::fk_positions(frames, chain);
    Mat out(frames.rows, kFeatureDim);
    for (std::size_t r = 0; r < frames.rows; ++r) {
        const auto [r0, r1] = vel_rows(r, seq);
        for (std::size_t f = 0; f < 4; ++f) {
            const auto jc = 3 * static_cast<std::size_t>(chain.foot_joints[f]);
            motion::Vec3 v;
            for (std::size_t a = 0; a < 3; ++a) {
                out(r, 7 * f + a) = P(r, jc + a);
                v[a] = fps * (P(r1, jc + a) - P(r0, jc + a));
                out(r, 7 * f + 3 + a) = v[a];
            }
            out(r, 7 * f + 6) = contact_score(P(r, jc + 1), v, p);
        }
    }
    return out;
}

Mat foot_features_backward(const Mat& frames, std::size_t seq, double fps, const motion::KinematicChain& chain,
                           const ContactParams& p, const Mat& dfeat) {
    check(frames, seq);
    require_shape(dfeat, frames.rows, kFeatureDim, "foot_features_backward");
    const Mat P = motion::fk_positions(frames, chain);
    Mat dP(P.rows, P.cols);
    for (std::size_t r = 0; r < frames.rows; ++r) {
        const auto [r0, r1] = vel_rows(r, seq);
        for (std::size_t f = 0; f < 4; ++f) {
            const auto jc = 3 * static_cast<std::size_t>(chain.foot_joints[f]);
            motion::Vec3 v;
            for (std::size_t a = 0; a < 3; ++a) v[a] = fps * (P(r1, jc + a) - P(r0, jc + a));
            const double speed = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + p.eps);
            const double sh = sigmoid(p.a * (p.height0 - P(r, jc + 1)));
            const double sv = sigmoid(p.b * (p.speed0 - speed));
            const double ds = dfeat(r, 7 * f + 6);
            // d score / d height and d score / d speed
            dP(r, jc + 1) += ds * sv * sh * (1.0 - sh) * (-p.a);
            const double dspeed = ds * sh * sv * (1.0 - sv) * (-p.b);
            for (std::size_t a = 0; a < 3; ++a) {
                dP(r, jc + a) += dfeat(r, 7 * f + a);
                const double dv = dfeat(r, 7 * f + 3 + a) + dspeed * v[a] / speed;
                dP(r1, jc + a) += fps * dv;
                dP(r0, jc + a) -= fps * dv;
            }
        }
    }
    return motion::fk_backward(frames, chain, dP);
}

}  // namespace lodge::foot
