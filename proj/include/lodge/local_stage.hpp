#pragma once

// Local stage: an n-frame denoiser conditioned on music plus a learned genre
// embedding, with an optional foot refine block, an optional multi-genre
// discriminator, and the boundary fine-tuning pass used before stitching.

#include <functional>
#include <memory>
#include <vector>

#include "lodge/config.hpp"
#include "lodge/dataset.hpp"
#include "lodge/denoiser.hpp"
#include "lodge/diffusion.hpp"
#include "lodge/train.hpp"

namespace lodge::local {

struct FootRefineState {
    Mat position;  // L x 12, feet in chain foot order
    Mat velocity;  // L x 12, m/s; last frame repeats the previous one
    Mat score;     // L x 4, in (0, 1)
};

FootRefineState contact_score(const motion::MotionSeq& seq, const motion::KinematicChain& chain,
                              const foot::ContactParams& p = {});

// Multi-genre discriminator over (motion window, genre, music window):
// per-frame Linear+GELU, mean over frames, concatenated with a genre
// embedding and the mean music row, then Linear+GELU+Linear to one logit.
class Discriminator {
public:
    struct Ctx {
        Mat x, h1_pre, h1, z, h2_pre, h2;
        std::vector<int> genres;
        std::size_t seq = 0;
    };

    Discriminator() = default;
    Discriminator(int genres, std::size_t embed, std::size_t hidden, std::uint64_t seed);

    // x: B*seq x 139, music: B*seq x 35. Returns B logits.
    std::vector<double> forward(const Mat& x, std::size_t seq, const std::vector<int>& genres, const Mat& music,
                                Ctx& ctx) const;
    // Accumulates parameter gradients; returns dL/dx.
    Mat backward(const Ctx& ctx, const std::vector<double>& dlogit);

    nn::ParamList params();
    int genres() const { return static_cast<int>(embed_.value.rows); }

private:
    nn::Linear frame_, mix_, head_;
    nn::Param embed_;
};

double softplus(double x);

struct MgdLosses {
    double disc = 0.0;  // mean softplus(-D(real)) + softplus(D(fake))
    double gen = 0.0;   // mean softplus(-D(fake))
};

// Losses from logits, with their gradients when requested.
MgdLosses mgd_loss(const std::vector<double>& real, const std::vector<double>& fake,
                   std::vector<double>* dreal = nullptr, std::vector<double>* dfake_disc = nullptr,
                   std::vector<double>* dfake_gen = nullptr);

class LocalModel {
public:
    LocalModel() = default;
    LocalModel(std::size_t n, int genres, const ModelConfig& mc, std::uint64_t seed);

    std::size_t n() const { return n_; }
    int genres() const { return static_cast<int>(genre_embed_.value.rows); }
    Denoiser& net() { return net_; }
    const Denoiser& net() const { return net_; }

    // Music rows with the genre embedding appended: B*n x (35 + E).
    Mat build_cond(const Mat& music, const std::vector<int>& genres) const;
    // Adds the genre columns of dcond into the embedding gradient.
    void backward_cond(const Mat& dcond, const std::vector<int>& genres);

    // Denoiser + genre embedding parameters.
    nn::ParamList params();

    // x0 model of one segment with its conditioning captured.
    diffusion::X0Model segment_model(const Mat& music, int genre) const;

    // Meta keys only; parameters are written by the trainer state.
    void save(ckpt::Checkpoint& c) const;
    // Loads EMA weights when present, else the raw parameters.
    static LocalModel from_checkpoint(const ckpt::Checkpoint& c);

private:
    std::size_t n_ = 0;
    Denoiser net_;
    nn::Param genre_embed_;
};

using LogFn = std::function<void(const train::LossRecord&)>;

struct LocalTrainer {
    LocalModel* model = nullptr;
    train::TrainState* state = nullptr;
    // Used only when weights.genre > 0.
    Discriminator* disc = nullptr;
    train::TrainState* disc_state = nullptr;
};

// Random n-frame crops; batch contents at step k depend only on (seed, k).
void train_local(const LocalTrainer& tr, const std::vector<dataset::PairedSample>& pairs,
                 const diffusion::NoiseSchedule& sched, const TrainConfig& cfg, const losses::LossWeights& weights,
                 std::uint64_t seed, const LogFn& log = {});

// Continues training with the first and last 4 rows of every noised input
// replaced by clean data and the acceleration weight multiplied by acc_boost.
void finetune_boundaries(const LocalTrainer& tr, const std::vector<dataset::PairedSample>& pairs,
                         const diffusion::NoiseSchedule& sched, const TrainConfig& cfg,
                         const losses::LossWeights& weights, double acc_boost, std::uint64_t seed,
                         const LogFn& log = {});

// x_t with rows [0, 4) and [n-4, n) of each n-row sample taken from d0.
Mat boundary_mix(const Mat& xt, const Mat& d0, std::size_t n);

}  // namespace lodge::local
