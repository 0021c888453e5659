#include "lodge/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace lodge::losses {

void LossWeights::validate() const {
    for (double w : {joint, vel, acc, contact, genre}) {
        if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("loss weights must be finite and non-negative");
    }
}

double recon_loss(const Mat& d0, const Mat& pred, Mat* dpred, double scale) {
    require_shape(pred, d0.rows, d0.cols, "recon_loss");
    const double inv = 1.0 / static_cast<double>(d0.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < d0.size(); ++i) {
        const double e = pred.data[i] - d0.data[i];
        sum += e * e;
    }
    if (dpred) {
        require_shape(*dpred, d0.rows, d0.cols, "recon_loss grad");
        for (std::size_t i = 0; i < d0.size(); ++i) dpred->data[i] += scale * 2.0 * (pred.data[i] - d0.data[i]) * inv;
    }
    return sum * inv;
}

AuxLosses aux_losses(const Mat& d0, const Mat& pred, std::size_t block, double fps, const motion::KinematicChain& chain,
                     const LossWeights& w, Mat* dpred) {
    using motion::kJoints;
    require_shape(pred, d0.rows, motion::kMotionDim, "aux_losses");
    require_shape(d0, pred.rows, motion::kMotionDim, "aux_losses");
    if (block < 3) throw std::invalid_argument("aux_losses: blocks need at least 3 frames");
    if (pred.rows == 0 || pred.rows % block != 0) throw std::invalid_argument("aux_losses: rows must be a multiple of the block length");
    const std::size_t nb = pred.rows / block;
    const std::size_t C = motion::kPosDim;

    const Mat P = motion::fk_positions(d0, chain);
    const Mat Ph = motion::fk_positions(pred, chain);
    Mat dP(Ph.rows, C);
    AuxLosses out;

    const double n_pos = static_cast<double>(pred.rows * kJoints);
    for (std::size_t i = 0; i < Ph.size(); ++i) {
        const double e = Ph.data[i] - P.data[i];
        out.joint += e * e;
        dP.data[i] += w.joint * 2.0 * e / n_pos;
    }
    out.joint /= n_pos;

    const double n_vel = static_cast<double>(nb * (block - 1) * kJoints);
    const double n_acc = static_cast<double>(nb * (block - 2) * kJoints);
    const double n_con = static_cast<double>(nb * (block - 1) * 4);
    const double f2 = fps * fps;
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t r0 = b * block;
        for (std::size_t i = 0; i + 1 < block; ++i) {
            const std::size_t r = r0 + i;
            for (std::size_t c = 0; c < C; ++c) {
                const double e = fps * ((Ph(r + 1, c) - Ph(r, c)) - (P(r + 1, c) - P(r, c)));
                out.vel += e * e;
                const double g = w.vel * 2.0 * e * fps / n_vel;
                dP(r + 1, c) += g;
                dP(r, c) -= g;
            }
            if (i + 2 < block) {
                for (std::size_t c = 0; c < C; ++c) {
                    const double e = f2 * ((Ph(r + 2, c) - 2.0 * Ph(r + 1, c) + Ph(r, c)) - (P(r + 2, c) - 2.0 * P(r + 1, c) + P(r, c)));
                    out.acc += e * e;
                    const double g = w.acc * 2.0 * e * f2 / n_acc;
                    dP(r + 2, c) += g;
                    dP(r + 1, c) -= 2.0 * g;
                    dP(r, c) += g;
                }
            }
            for (std::size_t f = 0; f < 4; ++f) {
                const auto jc = 3 * static_cast<std::size_t>(chain.foot_joints[f]);
                const double bh = pred(r, f);
                const double vx = fps * (Ph(r + 1, jc) - Ph(r, jc));
                const double vy = fps * (Ph(r + 1, jc + 1) - Ph(r, jc + 1));
                const double vz = fps * (Ph(r + 1, jc + 2) - Ph(r, jc + 2));
                const double vyd = std::min(vy, 0.0);
                const double ux = vx * bh, uy = vyd * bh, uz = vz * bh;
                out.contact += ux * ux + uy * uy + uz * uz;
                if (dpred && w.contact != 0.0) {
                    const double k = w.contact * 2.0 / n_con;
                    (*dpred)(r, f) += k * (ux * vx + uy * vyd + uz * vz);
                    const double gx = k * ux * bh * fps, gz = k * uz * bh * fps;
                    const double gy = vy < 0.0 ? k * uy * bh * fps : 0.0;
                    dP(r + 1, jc) += gx;
                    dP(r, jc) -= gx;
                    dP(r + 1, jc + 1) += gy;
                    dP(r, jc + 1) -= gy;
                    dP(r + 1, jc + 2) += gz;
                    dP(r, jc + 2) -= gz;
                }
            }
        }
    }
    out.vel /= n_vel;
    out.acc /= n_acc;
    out.contact /= n_con;

    if (dpred) {
        require_shape(*dpred, pred.rows, motion::kMotionDim, "aux_losses grad");
        add_inplace(*dpred, motion::fk_backward(pred, chain, dP));
    }
    return out;
}

double total_loss(double recon, const AuxLosses& a, double genre, const LossWeights& w) {
    return recon + w.joint * a.joint + w.vel * a.vel + w.acc * a.acc + w.contact * a.contact + w.genre * genre;
}

}  // namespace lodge::losses
