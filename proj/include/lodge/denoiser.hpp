#pragma once

// Sequence transformer shared by the global and local stages. Predicts the
// clean 139-channel motion from a noised one, conditioned on the timestep
// (through FiLM) and on a conditioning sequence (through cross attention).

#include <memory>
#include <vector>

#include <json.hpp>

#include "lodge/foot.hpp"
#include "lodge/motion.hpp"
#include "lodge/nn.hpp"

namespace lodge::ckpt {
struct Checkpoint;
}

namespace lodge {

struct DenoiserConfig {
    std::size_t model_dim = 64;
    std::size_t blocks = 4;
    std::size_t heads = 1;
    std::size_t time_embed_dim = 64;
    std::size_t cond_dim = 43;
    std::size_t seq_len = 64;
    std::size_t mlp_ratio = 2;
    bool cond_encoder = false;  // one self-attention encoder layer over the conditioning rows
    bool foot_refine = false;   // final residual stage over the root and leg channels
    double fps = motion::kDefaultFps;

    void validate() const;
    nlohmann::json to_json() const;
    static DenoiserConfig from_json(const nlohmann::json& j);
};

// Channels touched by the foot refine residual: root translation and the 6D
// rotations of both hips, knees and ankles.
const std::vector<std::size_t>& foot_refine_channels();

// Per-channel affine map between data space and model space:
// model = (data - mean) / scale. Identity by default.
struct Normalizer {
    std::vector<double> mean = std::vector<double>(motion::kMotionDim, 0.0);
    std::vector<double> scale = std::vector<double>(motion::kMotionDim, 1.0);

    Mat encode(const Mat& data) const;
    Mat decode(const Mat& model) const;
    // dL/dmodel given dL/ddata.
    Mat backward(const Mat& ddata) const;
    void validate() const;
};

// Mean and standard deviation (floored at min_scale) of every channel over all rows.
Normalizer fit_normalizer(const std::vector<const Mat*>& data, double min_scale = 0.05);

// Stored as tensors "norm/mean" and "norm/scale" (1 x 139).
void put_normalizer(ckpt::Checkpoint& c, const Normalizer& n);
Normalizer get_normalizer(const ckpt::Checkpoint& c);

struct DenoiserInput {
    const Mat* x = nullptr;          // B*S x 139
    std::vector<double> t;           // B timesteps
    const Mat* cond = nullptr;       // B*Sc x cond_dim
    std::size_t cond_len = 0;        // Sc
    std::vector<double> pos;         // B*S frame positions
    std::vector<double> cond_pos;    // B*Sc frame positions
};

struct DenoiserGrads {
    Mat dx;
    Mat dcond;
};

class Denoiser {
public:
    struct Tape;
    struct TapeDeleter {
        void operator()(Tape* t) const;
    };
    using TapePtr = std::unique_ptr<Tape, TapeDeleter>;

    Denoiser() = default;
    Denoiser(const DenoiserConfig& cfg, std::uint64_t seed);
    Denoiser(const Denoiser& o);
    Denoiser& operator=(const Denoiser& o);
    Denoiser(Denoiser&&) noexcept = default;
    Denoiser& operator=(Denoiser&&) noexcept = default;
    ~Denoiser();

    const DenoiserConfig& config() const { return cfg_; }

    // Safe to call concurrently when tape is null or distinct per call.
    Mat forward(const DenoiserInput& in, Tape* tape = nullptr) const;
    // Accumulates parameter gradients for the forward call recorded in tape.
    DenoiserGrads backward(const Tape& tape, const Mat& dy);

    // Conditioning rows after projection, position encoding and the optional encoder layer.
    Mat encode_cond(const Mat& cond, std::size_t cond_len, const std::vector<double>& cond_pos) const;

    nn::ParamList params();
    // Inputs and outputs live in model space; the foot refine block decodes
    // its input to data space for forward kinematics.
    const Normalizer& normalizer() const { return norm_; }
    void set_normalizer(const Normalizer& n);

    static TapePtr make_tape();

private:
    struct Block {
        nn::LayerNorm ln1, ln2, ln3;
        nn::Attention self_attn, cross_attn;
        nn::FiLM film1, film2, film3;
        nn::Linear fc1, fc2;
    };
    struct Encoder {
        nn::LayerNorm ln1, ln2;
        nn::Attention attn;
        nn::Linear fc1, fc2;
    };
    struct FootRefine {
        nn::LayerNorm ln;
        nn::Linear feat_proj;
        nn::Attention attn;
        nn::Linear out;  // zero-initialized
    };

    Mat cond_path(const Mat& cond, std::size_t Sc, const std::vector<double>& cond_pos, Tape& tp) const;

    DenoiserConfig cfg_;
    nn::Linear in_proj_, time1_, time2_, cond_proj_, out_proj_;
    nn::LayerNorm ln_out_;
    std::vector<Block> blocks_;
    std::unique_ptr<Encoder> encoder_;
    std::unique_ptr<FootRefine> refine_;
    foot::ContactParams contact_;
    Normalizer norm_;
};

// Deep copy of parameter values between two models with identical configs.
void copy_values(Denoiser& dst, Denoiser& src);

}  // namespace lodge
