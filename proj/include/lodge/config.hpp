#pragma once

// Run configuration shared by the library entry points and the CLI. Loaded
// from JSON (unknown keys are rejected) and echoed next to every output.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "lodge/diffusion.hpp"
#include "lodge/losses.hpp"
#include "lodge/optim.hpp"
#include "lodge/primitives.hpp"

namespace lodge {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
    std::size_t model_dim = 64;
    std::size_t blocks = 4;
    std::size_t time_embed_dim = 64;
    std::size_t mlp_ratio = 2;
    std::size_t genre_embed = 8;
    bool foot_refine = true;
    std::size_t disc_hidden = 64;
};

struct TrainConfig {
    long steps = 2000;
    std::size_t batch = 4;
    std::string optimizer = "adan";  // adan | adam
    double lr = 1e-3;
    double beta1 = 0.98, beta2 = 0.92, beta3 = 0.99;  // adam uses beta1/beta3 as its (b1, b2)
    double eps = 1e-8;
    double weight_decay = 0.0;
    double ema_decay = 0.999;
    double clip = 1.0;  // global gradient-norm clip, 0 = off
    long log_every = 50;
    long checkpoint_every = 0;  // 0 = only at the end

    nn::AdanConfig adan() const;
    nn::AdamConfig adam() const;
};

struct SamplerConfig {
    std::string kind = "ddpm";  // ddpm | ddim
    long steps = 100;           // ddim only
};

struct RunConfig {
    SegmentLayout layout{1024, 256, 1};
    long T = 1000;
    diffusion::ScheduleKind schedule = diffusion::ScheduleKind::cosine;
    SamplerConfig sampler;
    double s = 1.0;        // soft guidance strength
    bool augment = true;   // mirror + beat-align soft primitives
    ModelConfig model;
    TrainConfig global_train;
    TrainConfig local_train;
    TrainConfig finetune{500};
    double finetune_acc_boost = 2.0;
    losses::LossWeights weights;
    int genres = 4;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    double bas_sigma = 3.0;
    std::size_t metric_window = 256;  // frames per feature vector in FID/Div
    // gen-data
    std::size_t data_count = 50;
    std::size_t data_frames = 1024;
    std::size_t beat_period = 16;

    void validate() const;
    nlohmann::json to_json() const;
    // Overlays j onto the defaults.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
};

// Writes <dir>/config.json.
void write_config_echo(const std::filesystem::path& dir, const RunConfig& cfg, const nlohmann::json& extra = {});
// Same content at an explicit path.
void write_config_file(const std::filesystem::path& path, const RunConfig& cfg, const nlohmann::json& extra = {});

}  // namespace lodge
